/// Linear decay from `lr0` at step 0 to zero at `total_steps`; steps past
/// the end stay at zero.
pub fn lr_schedule(step: u64, total_steps: u64, lr0: f64) -> f64 {
    if total_steps == 0 || step >= total_steps {
        return 0.0;
    }
    lr0 * (1.0 - step as f64 / total_steps as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        assert_eq!(lr_schedule(0, 100, 2e-5), 2e-5);
        assert_eq!(lr_schedule(100, 100, 2e-5), 0.0);
        assert!((lr_schedule(50, 100, 2e-5) - 1e-5).abs() < 1e-20);
        assert_eq!(lr_schedule(150, 100, 2e-5), 0.0);
    }

    #[test]
    fn monotone_non_increasing() {
        let lrs: Vec<f64> = (0..=37).map(|s| lr_schedule(s, 37, 0.1)).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }
}
