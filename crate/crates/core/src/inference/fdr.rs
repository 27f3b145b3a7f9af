/// Benjamini–Yekutieli adjusted p-values.
pub fn by_qvalues(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    if m == 0 {
        return Vec::new();
    }
    let c: f64 = (1..=m).map(|i| 1.0 / i as f64).sum();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        let adj = p[i] * m as f64 * c / (rank + 1) as f64;
        running = running.min(adj).min(1.0);
        q[i] = running;
    }
    q
}
