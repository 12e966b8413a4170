use std::f64::consts::PI;

/// Warmup-then-cosine learning rate.
///
/// Ramps linearly from 0 to `alpha` over the first `max(1, ceil(N/10))`
/// iterations, then follows a half cosine down to `alpha / 100` at `N`.
/// Iterations past `N` stay at the floor. With `enabled` false the rate is
/// `alpha` throughout.
pub fn scheduled_lr(iter: usize, total: usize, alpha: f64, enabled: bool) -> f64 {
    if !enabled {
        return alpha;
    }
    let floor = alpha / 100.0;
    let warmup = ((total as f64 / 10.0).ceil() as usize).max(1);
    if iter < warmup {
        return alpha * iter as f64 / warmup as f64;
    }
    if iter >= total || total <= warmup {
        return floor;
    }
    let progress = (iter - warmup) as f64 / (total - warmup) as f64;
    floor + (alpha - floor) * 0.5 * (1.0 + (PI * progress).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        let alpha = 0.003;
        assert_eq!(scheduled_lr(0, 200, alpha, true), 0.0);
        assert!((scheduled_lr(200, 200, alpha, true) - alpha / 100.0).abs() < 1e-12);
        assert!((scheduled_lr(20, 200, alpha, true) - alpha).abs() < 1e-15);
        assert!((scheduled_lr(10, 200, alpha, true) - alpha / 2.0).abs() < 1e-15);
    }

    #[test]
    fn disabled_is_constant() {
        for i in [0, 1, 50, 99, 100, 500] {
            assert_eq!(scheduled_lr(i, 100, 0.02, false), 0.02);
        }
    }

    #[test]
    fn decays_monotonically_after_warmup() {
        let lrs: Vec<f64> = (10..=100).map(|i| scheduled_lr(i, 100, 1.0, true)).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
        assert!(lrs.iter().all(|&l| (0.01..=1.0).contains(&l)));
    }

    #[test]
    fn tiny_runs() {
        assert_eq!(scheduled_lr(0, 1, 1.0, true), 0.0);
        assert!((scheduled_lr(1, 1, 1.0, true) - 0.01).abs() < 1e-15);
        assert_eq!(scheduled_lr(0, 0, 1.0, true), 0.0);
    }
}
