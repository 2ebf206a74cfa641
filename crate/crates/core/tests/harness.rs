mod common;

use ldp_confseq::confseq::{hoeffding_ci, hoeffding_cs};
use ldp_confseq::harness::config::{DataLaw, ExperimentConfig, MechanismConfig, MechanismKind, MethodConfig};
use ldp_confseq::harness::io::{self, Format};
use ldp_confseq::harness::{generate, run_experiment, RawStream};
use ldp_confseq::mechanisms::{PrivacyParams, RandomSource};
use ldp_confseq::schedules::LambdaSchedule;

use common::{mean_and_se, nprr_records};

fn config(method: MethodConfig, epsilon: Option<f64>, reps: u64, horizon: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed: 17,
        replications: reps,
        alpha: 0.1,
        horizon,
        checkpoints: None,
        threads: None,
        data: DataLaw::Beta { a: 10.0, b: 30.0 },
        mechanism: MechanismConfig { kind: MechanismKind::Nprr, epsilon, r: None, g: None },
        method,
    }
}

#[test]
fn beta_sample_mean() {
    let mut rng = RandomSource::new(1, 0);
    let RawStream::Scalar { xs, truth } = generate(&DataLaw::Beta { a: 10.0, b: 30.0 }, 1_000_000, &mut rng).unwrap()
    else {
        unreachable!()
    };
    let (mean, se) = mean_and_se(&xs);
    assert_eq!(truth[0], 0.25);
    assert!((mean - 0.25).abs() <= 4.0 * se);
}

#[test]
fn non_private_hoeffding_ci_has_closed_form_width() {
    // gridpoint inputs make the running mean constant, so the tightest
    // per-time bound is the one at n
    let n = 1000u64;
    let xs = vec![0.5; n as usize];
    let recs = nprr_records(&xs, PrivacyParams::non_private(2).unwrap(), &mut RandomSource::new(0, 0));
    let half_alpha = 0.05f64;
    let ci = hoeffding_ci(&recs, n, half_alpha).unwrap().entries[0];
    let closed_form = 2.0 * ((1.0 / half_alpha).ln() / (2.0 * n as f64)).sqrt();
    assert!((ci.width() / closed_form - 1.0).abs() < 1e-12);

    // with random data the running extrema can only tighten it
    let table = run_experiment(&config(MethodConfig::HoeffdingCi, None, 20, n)).unwrap();
    let last = table.rows.last().unwrap();
    assert_eq!(last.t, n);
    assert!(last.mean_width <= closed_form + 1e-12);
    assert!(last.mean_width >= 0.8 * closed_form);
}

#[test]
fn widths_shrink_as_epsilon_grows() {
    let widths: Vec<f64> = [2.0, 4.0, 8.0]
        .iter()
        .map(|&eps| {
            let table = run_experiment(&config(MethodConfig::HoeffdingCi, Some(eps), 50, 1000)).unwrap();
            table.rows.last().unwrap().mean_width
        })
        .collect();
    assert!(widths[0] > widths[1] && widths[1] > widths[2], "{widths:?}");
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let mut cfg = config(MethodConfig::GridkellyCs { d: 10, theta: 0.5 }, Some(2.0), 24, 300);
    cfg.threads = Some(1);
    let one = run_experiment(&cfg).unwrap();
    cfg.threads = Some(4);
    let four = run_experiment(&cfg).unwrap();
    let again = run_experiment(&cfg).unwrap();
    assert_eq!(io::table_to_string(&one, Format::Csv).unwrap(), io::table_to_string(&four, Format::Csv).unwrap());
    assert_eq!(four, again);
}

#[test]
fn anytime_p_values_are_valid_under_the_null() {
    let mut cfg = config(MethodConfig::HoeffdingEprocess { mu0: None }, Some(2.0), 1000, 1000);
    cfg.checkpoints = Some(vec![1000]);
    let rate = run_experiment(&cfg).unwrap().rows[0].empirical_miscoverage;
    assert!(rate <= 0.1 + 3.0 * (0.09f64 / 1000.0).sqrt(), "rejection rate {rate}");
}

#[test]
fn every_method_runs_end_to_end() {
    let scalar = [
        MethodConfig::HoeffdingCi,
        MethodConfig::HoeffdingCs,
        MethodConfig::MixtureTwoSided { t0: 100 },
        MethodConfig::MixtureLower { t0: 100 },
        MethodConfig::PmkellyCi { c: 0.8 },
        MethodConfig::GridkellyCs { d: 30, theta: 0.5 },
        MethodConfig::HoeffdingEprocess { mu0: Some(0.2) },
        MethodConfig::MixtureEprocess { mu0: Some(0.2), t0: 100 },
    ];
    for method in scalar {
        let table = run_experiment(&config(method, Some(2.0), 4, 200)).unwrap();
        for row in &table.rows {
            assert!((0.0..=1.0).contains(&row.empirical_miscoverage) && row.mean_width >= 0.0, "{row:?}");
        }
    }
    let mut lap = config(MethodConfig::LaplaceHoeffdingCi { c: 0.1 }, Some(2.0), 4, 200);
    lap.mechanism.kind = MechanismKind::Laplace;
    run_experiment(&lap).unwrap();
    lap.method = MethodConfig::LaplaceHoeffdingCs { c: 0.1 };
    run_experiment(&lap).unwrap();
    let mut sirr = config(MethodConfig::SirrLrCs, Some(2.0), 4, 200);
    sirr.data = DataLaw::SinusoidalMean;
    sirr.mechanism.kind = MechanismKind::Sirr;
    run_experiment(&sirr).unwrap();
    for method in [
        MethodConfig::AbLowerCs { t0: 100 },
        MethodConfig::AbTwoSidedCs { t0: 100 },
        MethodConfig::WeakNullEprocess { t0: 100 },
    ] {
        let mut ab = config(method, Some(2.0), 4, 200);
        ab.data = DataLaw::Fig5Ab { pi: 0.5, swap_arms: false };
        run_experiment(&ab).unwrap();
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let good = config(MethodConfig::HoeffdingCs, Some(2.0), 2, 10);
    let mut bad = good.clone();
    bad.replications = 0;
    assert!(run_experiment(&bad).is_err());
    let mut bad = good.clone();
    bad.method = MethodConfig::SirrLrCs;
    assert!(run_experiment(&bad).is_err());
    let mut bad = good.clone();
    bad.mechanism.kind = MechanismKind::Laplace;
    assert!(run_experiment(&bad).is_err());
    assert!(ExperimentConfig::from_toml_str("seed = 1\nreplications = 2\n").is_err());
    let text = good.to_toml_string().unwrap();
    assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), good);
    let unknown = text.replace("[data]", "[data]\nwobble = 3");
    assert!(ExperimentConfig::from_toml_str(&unknown).is_err());
    let mut bad_law = text.clone();
    bad_law = bad_law.replace("law = \"beta\"", "law = \"cauchy\"");
    assert!(ExperimentConfig::from_toml_str(&bad_law).is_err());
}

#[test]
fn files_round_trip_into_identical_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = RandomSource::new(4, 0);
    let RawStream::Scalar { xs, .. } = generate(&DataLaw::Uniform, 500, &mut rng).unwrap() else { unreachable!() };
    let recs = nprr_records(&xs, PrivacyParams::for_epsilon(1.0, 4).unwrap(), &mut rng);
    let schedule = LambdaSchedule::TimeUniform { alpha: 0.05 };
    let direct = hoeffding_cs(&recs, schedule, 0.05).unwrap();
    for format in [Format::Csv, Format::Json] {
        let path = dir.path().join(format!("recs.{format:?}"));
        io::write_atomic(&path, &io::records_to_string(&recs, format).unwrap()).unwrap();
        let back = io::read_records(&std::fs::read_to_string(&path).unwrap(), format).unwrap();
        assert_eq!(back, recs);
        assert_eq!(hoeffding_cs(&back, schedule, 0.05).unwrap(), direct);
    }
    let bounds = io::bounds_to_string(&direct, Format::Csv).unwrap();
    assert_eq!(io::read_bounds_csv(&bounds).unwrap(), direct.entries);
    let leftovers: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().contains(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}
