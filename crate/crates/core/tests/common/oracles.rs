//! Brute-force discounted sums.

/// Target for every step of one worker's rollout: the discounted reward sum
/// up to the first terminal (inclusive) or the horizon end, plus the
/// discounted bootstrap only when no terminal was met.
pub fn brute_nstep(rewards: &[f64], dones: &[bool], bootstrap: f64, gamma: f64) -> Vec<f64> {
    let n = rewards.len();
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            for d in 0..(n - t) {
                total += gamma.powi(d as i32) * rewards[t + d];
                if dones[t + d] {
                    return total;
                }
            }
            total + gamma.powi((n - t) as i32) * bootstrap
        })
        .collect()
}

/// `R_t = Σ_{k ≥ t} γ^{k−t} r_k`, evaluated term by term.
pub fn brute_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    (0..rewards.len())
        .map(|t| (t..rewards.len()).map(|k| gamma.powi((k - t) as i32) * rewards[k]).sum())
        .collect()
}
