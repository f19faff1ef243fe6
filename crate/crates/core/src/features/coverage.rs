/// Coverage ratios `(ρ_joint, ρ_sep)`.
///
/// `ρ_joint = |N_joint| / (|P^S| + |P^R|)`; `ρ_sep` divides the anchor's own
/// neighbourhood count by the size of the anchor's cloud.
pub fn coverage_ratios(
    n_source_nbrs: usize,
    n_reference_nbrs: usize,
    n_source: usize,
    n_reference: usize,
    anchor_in_source: bool,
) -> (f64, f64) {
    let total = n_source + n_reference;
    let joint = if total == 0 {
        0.0
    } else {
        (n_source_nbrs + n_reference_nbrs) as f64 / total as f64
    };
    let (own, own_total) = if anchor_in_source {
        (n_source_nbrs, n_source)
    } else {
        (n_reference_nbrs, n_reference)
    };
    let sep = if own_total == 0 {
        0.0
    } else {
        own as f64 / own_total as f64
    };
    (joint.clamp(0.0, 1.0), sep.clamp(0.0, 1.0))
}
