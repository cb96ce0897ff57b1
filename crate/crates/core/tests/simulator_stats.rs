use polsq::forward::window_average_dm;
use polsq::measurement::{default_settings, OutcomeModel, N_OUTCOMES};
use polsq::simulator::{default_live_times, simulate_counts, simulate_tomography};
use polsq::{CalibrationData, SourceParams, TwoPhotonState};

const GAMMA: f64 = 6.7e7;

fn paper_state() -> (SourceParams, TwoPhotonState) {
    let p = SourceParams::new(9.6e5, 1.9e5, GAMMA).with_phase(0.3);
    let rho = window_average_dm(&p, 0.0, 12e-9).unwrap();
    (p, rho)
}

fn realistic_calib() -> CalibrationData {
    let mut c = CalibrationData::ideal(2e3, 26e-9);
    c.gamma = [0.22, 0.28, 0.24, 0.26];
    for m in 0..N_OUTCOMES {
        c.beta[m] = [4.0e4, 5.1e4, 4.4e4, 4.8e4];
        c.background[m] = [3e3, 4e3, 3.5e3, 3.8e3];
        c.alpha[m] = 2e3 * (1.0 + 0.03 * (m as f64 - 4.5));
    }
    c
}

#[test]
fn simulate_tomography_equals_counts_from_window_state() {
    let (p, rho) = paper_state();
    let calib = realistic_calib();
    let a = simulate_tomography(&p, &calib, 70.0, (0.0, 12e-9), 99).unwrap();
    let b = simulate_counts(&rho, &calib, &default_live_times(70.0), Some((0.0, 12e-9)), 99).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sample_mean_within_three_standard_errors() {
    let (_, rho) = paper_state();
    let calib = realistic_calib();
    let live = default_live_times(7.0);
    let rates = OutcomeModel::new(&default_settings(), &calib)
        .unwrap()
        .rates(rho.matrix());
    let seeds = 10_000u64;
    let mut sum = [0.0; N_OUTCOMES];
    for s in 0..seeds {
        for r in simulate_counts(&rho, &calib, &live, None, s).unwrap() {
            sum[r.m - 1] += r.n_exp as f64;
        }
    }
    for m in 0..N_OUTCOMES {
        let mean = rates[m] * live[m];
        let se = (mean / seeds as f64).sqrt();
        let got = sum[m] / seeds as f64;
        assert!(
            (got - mean).abs() < 3.0 * se,
            "m={} got {got} want {mean} se {se}",
            m + 1
        );
    }
}

#[test]
fn counts_scale_linearly_with_duration() {
    let (_, rho) = paper_state();
    let calib = CalibrationData::ideal(2e3, 26e-9);
    let rates = OutcomeModel::new(&default_settings(), &calib)
        .unwrap()
        .rates(rho.matrix());
    let durations: Vec<f64> = (1..=10).map(|k| k as f64 * 0.7).collect();
    let means: Vec<f64> = durations
        .iter()
        .map(|&d| {
            let live = default_live_times(d);
            (0..1000u64)
                .map(|s| {
                    simulate_counts(&rho, &calib, &live, None, s)
                        .unwrap()
                        .iter()
                        .map(|r| r.n_exp)
                        .sum::<u64>() as f64
                })
                .sum::<f64>()
                / 1000.0
        })
        .collect();
    let n = durations.len() as f64;
    let mx = durations.iter().sum::<f64>() / n;
    let my = means.iter().sum::<f64>() / n;
    let sxy: f64 = durations.iter().zip(&means).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = durations.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let want: f64 = rates.iter().sum::<f64>() / 7.0;
    assert!((slope / want - 1.0).abs() < 0.02, "slope {slope} want {want}");
}

#[test]
fn zero_background_frequencies_pass_chi_square() {
    let (_, rho) = paper_state();
    let mut calib = CalibrationData::ideal(1.0, 26e-9);
    calib.beta = [[0.0; 4]; N_OUTCOMES];
    let rates = OutcomeModel::new(&default_settings(), &calib)
        .unwrap()
        .rates(rho.matrix());
    let total_rate: f64 = rates.iter().sum();
    // live time per outcome giving ~1e5 expected coincidences in total
    let live = [1e5 / total_rate; N_OUTCOMES];
    // 99th percentile of χ² with 9 degrees of freedom
    let critical = 21.666;
    let mut rejected = 0;
    for s in 0..200u64 {
        let recs = simulate_counts(&rho, &calib, &live, None, s).unwrap();
        let n: f64 = recs.iter().map(|r| r.n_exp as f64).sum();
        let chi2: f64 = recs
            .iter()
            .map(|r| {
                let e = n * rates[r.m - 1] / total_rate;
                (r.n_exp as f64 - e).powi(2) / e
            })
            .sum();
        if chi2 > critical {
            rejected += 1;
        }
    }
    assert!(rejected <= 6, "{rejected} of 200 runs rejected at the 1% level");
}
