use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weakfactor::panel::standardize;
use weakfactor::pc::{pc_fit, PcModel};
use weakfactor::simulate::{simulate_panel, SimConfig};
use weakfactor::Panel;

fn max_abs(m: &Array2<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn random_panel(rng: &mut ChaCha8Rng) -> Panel {
    let n = rng.random_range(3..40);
    let t = rng.random_range(3..40);
    let x = Array2::from_shape_fn((n, t), |_| rng.random_range(-2.0..2.0));
    standardize(&Panel::from_matrix(x).unwrap()).unwrap()
}

#[test]
fn fit_identities_on_random_panels() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..100 {
        let panel = random_panel(&mut rng);
        let (n, t) = (panel.n(), panel.t());
        let model = PcModel::new(&panel).unwrap();
        let r = 1 + case % n.min(t).min(6);
        let fit = model.fit(r).unwrap();

        let ftf = fit.factors.t().dot(&fit.factors) / t as f64;
        assert!(max_abs(&(ftf - Array2::<f64>::eye(r))) < 1e-8, "case {case}: F'F/T");

        let ltl = fit.loadings.t().dot(&fit.loadings) / n as f64;
        for i in 0..r {
            for j in 0..r {
                let want = if i == j { fit.eigvals[i] } else { 0.0 };
                assert!((ltl[[i, j]] - want).abs() < 1e-8, "case {case}: L'L/N");
            }
        }

        assert!(max_abs(&fit.resid.dot(&fit.factors)) < 1e-8, "case {case}: eF");
        let rebuilt = &fit.common + &fit.resid;
        assert_eq!(rebuilt.dim(), panel.values().dim());
        assert!(max_abs(&(rebuilt - panel.values())) < 1e-12, "case {case}: X = C + e");
    }
}

#[test]
fn noise_free_standardized_panel_recovers_common_component() {
    // full supports, so no series is identically zero
    let mut cfg = SimConfig::new(60, 50, vec![1.0, 1.0], 9);
    cfg.error_scale = 0.0;
    cfg.standardize = true;
    let (panel, truth) = simulate_panel(&cfg).unwrap();
    let fit = pc_fit(&panel, 2).unwrap();
    let c0 = truth.c0_panel_scale();
    // standardization also removes the sample mean of each row
    let mut centred = c0.clone();
    for mut row in centred.rows_mut() {
        let m = row.mean().unwrap();
        row.mapv_inplace(|v| v - m);
    }
    assert!(max_abs(&(&fit.common - &centred)) < 1e-6);
}
