use proptest::prelude::*;

use supplyshare::correlation::{estimate_correlations, CountryDeltas, DeltaEstimates};
use supplyshare::emu::{adjust_service_stat, compute_emu};
use supplyshare::inference::diagnostics::split_rhat;
use supplyshare::inference::summary::quantile;
use supplyshare::inference::truncnorm_cdf;
use supplyshare::model::{compose_shares, reconstruct_betas};
use supplyshare::spline::BasisSet;
use supplyshare::validation::metrics;

fn deltas_from(n_methods: usize, countries: Vec<(usize, Vec<f64>, Vec<bool>)>) -> DeltaEstimates {
    DeltaEstimates {
        n_methods,
        countries: countries
            .into_iter()
            .enumerate()
            .map(|(i, (n_diffs, medians, mask))| CountryDeltas {
                country: format!("C{i}"),
                n_diffs,
                n_methods,
                medians,
                mask,
            })
            .collect(),
    }
}

prop_compose! {
    /// Random stage-1 medians: 1 to 4 countries, 3 methods, 2 to 6 differences.
    fn delta_sets()(parts in prop::collection::vec(
        (2usize..7).prop_flat_map(|h| (
            Just(h),
            prop::collection::vec(-2.0f64..2.0, 2 * h * 3),
            prop::collection::vec(prop::bool::weighted(0.8), h * 3),
        )),
        1..5,
    )) -> DeltaEstimates {
        deltas_from(3, parts)
    }
}

proptest! {
    #[test]
    fn shares_close_and_stay_inside(psi1 in -30.0f64..30.0, psi2 in -30.0f64..30.0) {
        let s = compose_shares(psi1, psi2);
        prop_assert!((s.sum() - 1.0).abs() <= 1e-12);
        for v in [s.phi1, s.phi2, s.phi3] {
            prop_assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn extreme_logits_still_close(psi1 in -1e6f64..1e6, psi2 in -1e6f64..1e6) {
        let s = compose_shares(psi1, psi2);
        prop_assert!((s.sum() - 1.0).abs() <= 1e-12);
        prop_assert!(s.phi1 >= 0.0 && s.phi2 >= 0.0 && s.phi3 >= 0.0);
    }

    #[test]
    fn betas_difference_back_to_deltas(
        alpha in -5.0f64..5.0,
        deltas in prop::collection::vec(-3.0f64..3.0, 1..15),
        k_frac in 0.0f64..1.0,
    ) {
        let k_star = ((deltas.len() + 1) as f64 * k_frac) as usize;
        let beta = reconstruct_betas(alpha, &deltas, k_star).unwrap();
        prop_assert_eq!(beta[k_star], alpha);
        for (h, d) in deltas.iter().enumerate() {
            prop_assert!((beta[h + 1] - beta[h] - d).abs() <= 1e-12);
        }
    }

    #[test]
    fn basis_is_a_partition_of_unity(recent in 1995u32..2021, start in 1980u32..1994, end in 2022u32..2035) {
        let window = (f64::from(start), f64::from(end));
        let grid: Vec<f64> = (start..=end).map(f64::from).collect();
        let b = BasisSet::new("X", f64::from(recent), window, 3.5, &grid).unwrap();
        for r in 0..grid.len() {
            let row = b.basis.row(r);
            prop_assert!((row.sum() - 1.0).abs() <= 1e-9);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn correlation_estimates_are_psd(d in delta_sets()) {
        let rho = estimate_correlations(&d).unwrap();
        prop_assert!(rho.min_eigenvalue() >= -1e-10);
        for r in &rho.rho {
            for i in 0..3 {
                prop_assert!((r[(i, i)] - 1.0).abs() <= 1e-12 || r[(i, i)] == 0.0 || r[(i, i)] == 1.0);
            }
        }
    }

    #[test]
    fn correlations_ignore_per_method_scale(d in delta_sets(), scale in 0.01f64..100.0, m in 0usize..3) {
        let before = estimate_correlations(&d).unwrap();
        let mut scaled = d.clone();
        for c in &mut scaled.countries {
            for s in 0..2 {
                for h in 0..c.n_diffs {
                    c.medians[(s * c.n_diffs + h) * 3 + m] *= scale;
                }
            }
        }
        let after = estimate_correlations(&scaled).unwrap();
        for s in 0..2 {
            for (a, b) in before.rho[s].iter().zip(after.rho[s].iter()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn truncated_normal_cdf_is_monotone(mu in -1.0f64..2.0, sd in 0.005f64..2.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (fl, fh) = (truncnorm_cdf(lo, mu, sd), truncnorm_cdf(hi, mu, sd));
        prop_assert!((0.0..=1.0).contains(&fl) && (0.0..=1.0).contains(&fh));
        prop_assert!(fl <= fh + 1e-12);
    }

    #[test]
    fn adjustment_falls_as_share_rises(y in 0.0f64..1e7, p in 0.01f64..1.0, q in 0.01f64..1.0) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        let a = adjust_service_stat(y, &[lo]).unwrap().draws[0];
        let b = adjust_service_stat(y, &[hi]).unwrap().draws[0];
        prop_assert!(b <= a);
        prop_assert!(a >= y);
    }

    #[test]
    fn emu_ignores_common_scale(users in prop::collection::vec(1.0f64..1e6, 1..20), wra in 1e5f64..1e8, k in 0.001f64..1000.0) {
        let a = compute_emu(&users, wra).unwrap();
        let scaled: Vec<f64> = users.iter().map(|u| u * k).collect();
        let b = compute_emu(&scaled, wra * k).unwrap();
        for (x, y) in a.draws.iter().zip(&b.draws) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn error_metrics_ignore_order(mut errors in prop::collection::vec(-0.5f64..0.5, 1..50), seed in any::<u64>()) {
        let a = metrics(&errors).unwrap();
        let n = errors.len();
        errors.rotate_left((seed as usize) % n);
        errors.reverse();
        let b = metrics(&errors).unwrap();
        prop_assert!((a.rmse - b.rmse).abs() <= 1e-12);
        prop_assert!((a.mean_error - b.mean_error).abs() <= 1e-12);
        prop_assert_eq!(a.median_abs_error, b.median_abs_error);
    }

    #[test]
    fn quantiles_are_monotone(values in prop::collection::vec(-10.0f64..10.0, 1..40), p in 0.0f64..1.0, q in 0.0f64..1.0) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(quantile(&values, lo) <= quantile(&values, hi));
    }

    #[test]
    fn rhat_ignores_affine_maps(
        chains in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 20), 2..5),
        a in 0.1f64..10.0,
        b in -10.0f64..10.0,
    ) {
        let r1 = split_rhat(&chains).unwrap();
        let mapped: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|x| a * x + b).collect()).collect();
        let r2 = split_rhat(&mapped).unwrap();
        prop_assert!((r1 - r2).abs() <= 1e-8 * r1.abs().max(1.0) || (r1.is_nan() && r2.is_nan()));
    }
}
