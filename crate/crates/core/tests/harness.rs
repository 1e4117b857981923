use std::fs;

use dpkpz::harness::config::{BetaKeyword, EtaConfig, ExperimentConfig, FixedEta, GSpec, LawConfig, RhoConfig};
use dpkpz::harness::experiments::{self, check_budget, memory_requirement};
use dpkpz::harness::output::{self, EtaJob, Invocation, PolymerJob, PolymerOutput};
use dpkpz::harness::BetaSpec;
use dpkpz::noise::{Environment, NoiseField, NoiseLaw};
use dpkpz::polymer;
use dpkpz::scaling::TestFunction;
use dpkpz::stats::Welford;
use dpkpz::walk::{self, WalkConfig};
use dpkpz::Error;

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        d: 3,
        law: LawConfig::StandardGaussian,
        beta: BetaSpec::Value(0.3),
        g: GSpec::Linear { a: vec![0.2, 0.0, 0.0] },
        t: 0.5,
        x: vec![0.0; 3],
        eps: vec![0.3, 0.2],
        gamma: 0.5,
        c: 1.0,
        replicates: 6,
        seed: 3,
        output: None,
        memory_budget_gb: 8.0,
        eta: EtaConfig { value: Some(FixedEta { eta: -0.01, se: 0.001 }), ..EtaConfig::default() },
        rho: None,
        phi: Some(TestFunction::SmoothBump { center: vec![0.0; 3], radius: 0.6 }),
        reference_order: 12,
    }
}

fn read_csv(path: &std::path::Path) -> Vec<Vec<String>> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn mse_is_bias_squared_plus_variance() {
    let report = experiments::run_theorem_experiment(&small_config()).unwrap();
    assert_eq!(report.rows.len(), 2);
    for r in &report.rows {
        assert!(r.mse >= 0.0);
        assert!((r.mse - (r.bias * r.bias + r.variance)).abs() <= 1e-9, "{r:?}");
    }
    assert!(report.rows[0].eps > report.rows[1].eps);
    assert_eq!(report.eta.replicates, 0);
}

#[test]
fn constant_profile_shifts_every_sample() {
    let zero = ExperimentConfig { g: GSpec::Zero, ..small_config() };
    let constant = ExperimentConfig { g: GSpec::Constant { value: 0.75 }, ..small_config() };
    let (pz, pc) = (experiments::prepare(&zero).unwrap(), experiments::prepare(&constant).unwrap());
    let sz = experiments::sample_experiment(&zero, &pz).unwrap();
    let sc = experiments::sample_experiment(&constant, &pc).unwrap();
    for (a, b) in sz.iter().zip(&sc) {
        assert_eq!((a.replicate, a.eps), (b.replicate, b.eps));
        assert!((b.f_tilde - a.f_tilde - 0.75).abs() < 1e-12);
        assert!((b.f_unsmoothed - a.f_unsmoothed - 0.75).abs() < 1e-12);
    }
    assert_eq!(experiments::h_at_point(&constant, &pc).unwrap().h, 0.75);

    let phi = constant.phi.clone().unwrap();
    let mass = phi.integrate_against(12, |_| 1.0).unwrap();
    let reference = experiments::reference_integral(&constant, &pc, &phi).unwrap();
    assert!((reference - 0.75 * mass).abs() < 1e-14 * mass.max(1.0));
}

#[test]
fn budget_refusal_names_the_feasible_ladder() {
    let mut cfg = small_config();
    let first = memory_requirement(&cfg, 0.3, 2).unwrap();
    let second = memory_requirement(&cfg, 0.2, 2).unwrap();
    assert!(second > first);
    cfg.memory_budget_gb = (first as f64 + 1.0) / 1e9;
    match check_budget(&cfg, 2) {
        Err(Error::MemoryBudget(msg)) => {
            assert!(msg.contains(&second.to_string()), "{msg}");
            assert!(msg.contains("[0.3]"), "{msg}");
        }
        other => panic!("expected a budget refusal, got {other:?}"),
    }
    cfg.memory_budget_gb = 8.0;
    check_budget(&cfg, 2).unwrap();
}

#[test]
fn auto_beta_is_half_of_beta_zero() {
    let rho = RhoConfig { horizon: 2_000, replicates: 20_000, seed: 9 };
    let cfg = ExperimentConfig { beta: BetaSpec::Keyword(BetaKeyword::Auto), rho: Some(rho), ..small_config() };
    let prep = experiments::prepare(&cfg).unwrap();
    let rho_hat = walk::rho_d(&WalkConfig::new(3, 2_000, 20_000, 9).unwrap()).unwrap().stats.mean;
    // Standard Gaussian noise has mu(beta) = exp(beta^2).
    let want = 0.5 * (-rho_hat.ln()).sqrt();
    assert!((prep.beta - want).abs() < 1e-8, "{} vs {want}", prep.beta);
    let regime = prep.regime.unwrap();
    assert!(regime.in_l2());
}

#[test]
fn polymer_sites_follow_the_first_step() {
    let dir = tempfile::tempdir().unwrap();
    let beta = 0.6;
    let job = PolymerJob {
        d: 3,
        law: LawConfig::StandardGaussian,
        beta,
        g: GSpec::Zero,
        eps: 1.0,
        t: 1,
        radius: 2,
        seed: 17,
        replicates: 2,
        output: PolymerOutput::Sites,
        rho: None,
    };
    output::execute(&Invocation::Polymer(job), dir.path()).unwrap();
    let rows = read_csv(&dir.path().join("sites.csv"));
    assert_eq!(rows.len(), 2 * 25);
    for r in rows {
        let j: u64 = r[0].parse().unwrap();
        let x: Vec<i64> = r[2..5].iter().map(|v| v.parse().unwrap()).collect();
        let f: f64 = r[5].parse().unwrap();
        let e = Environment::new(polymer::replicate_seed(17, j), NoiseLaw::StandardGaussian, 3).unwrap();
        let want = e.xi(1, &x) + 6f64.ln() / beta;
        assert!((f - want).abs() < 1e-12, "{x:?}: {f} vs {want}");
    }
}

#[test]
fn manifests_are_self_contained() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("map.csv");
    fs::write(&table, "-3,-2\n0,0\n3,2\n").unwrap();
    let job = EtaJob {
        d: 3,
        law: LawConfig::LipschitzCsv { path: table.clone(), lipschitz: 1.0 },
        beta: 0.4,
        t_list: vec![2, 4],
        replicates: 50,
        seed: 2,
        rho: None,
    };
    let first = dir.path().join("first");
    let m = output::execute(&Invocation::Eta(job), &first).unwrap();
    assert!(matches!(&m.invocation, Invocation::Eta(j) if matches!(j.law, LawConfig::LipschitzMap { .. })));
    assert_eq!(m.seeds.get("environment"), Some(&2));
    fs::remove_file(&table).unwrap();

    let second = dir.path().join("second");
    output::rerun(&first, &second).unwrap();
    assert_eq!(fs::read(first.join("eta.csv")).unwrap(), fs::read(second.join("eta.csv")).unwrap());

    let back: output::Manifest =
        serde_json::from_str(&fs::read_to_string(first.join(output::MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(back.invocation, m.invocation);
}

#[test]
fn experiment_runs_rerun_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { replicates: 2, ..small_config() };
    for (k, inv) in [Invocation::Scale(cfg.clone()), Invocation::Theorem(cfg.clone()), Invocation::Corollary(cfg)]
        .into_iter()
        .enumerate()
    {
        let a = dir.path().join(format!("a{k}"));
        let b = dir.path().join(format!("b{k}"));
        let m = output::execute(&inv, &a).unwrap();
        output::rerun(&a.join(output::MANIFEST_FILE), &b).unwrap();
        for f in &m.files {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
        }
    }
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("law.csv"), "-1,-0.5\n1,0.5\n").unwrap();
    let text = r#"
        d = 3
        beta = 0.25
        law = { kind = "lipschitz-csv", path = "law.csv", lipschitz = 0.5 }
        g = { kind = "capped-norm", cap = 2.0 }
        t = 1.0
        x = [0.0, 0.5, 0.0]
        eps = [0.2, 0.1]
        replicates = 4
        phi = { kind = "tensor-cosine", center = [0.0, 0.0, 0.0], radius = 0.5 }
        [eta]
        t_star = 16
        replicates = 100
    "#;
    let path = dir.path().join("exp.toml");
    fs::write(&path, text).unwrap();
    let cfg = ExperimentConfig::from_path(&path).unwrap();
    assert!(matches!(cfg.law, LawConfig::LipschitzMap { .. }));
    assert_eq!(cfg.eta.t_list(), vec![1, 2, 4, 8, 16]);
    assert!(matches!(cfg.phi, Some(TestFunction::TensorCosine { .. })));
    let json = serde_json::to_string(&Invocation::Corollary(cfg.clone())).unwrap();
    assert_eq!(serde_json::from_str::<Invocation>(&json).unwrap(), Invocation::Corollary(cfg));
}

#[test]
fn corollary_without_phi_is_a_config_error() {
    let cfg = ExperimentConfig { phi: None, ..small_config() };
    let err = experiments::run_corollary_experiment(&cfg).unwrap_err();
    assert_eq!(err.category(), "config");
}

#[test]
fn gaussian_sample_mean_is_within_clt_band() {
    let e = Environment::new(41, NoiseLaw::StandardGaussian, 3).unwrap();
    let w: Welford = (0..100_000i64).map(|i| e.xi(1 + (i % 7) as u64, &[i, -i, 3])).collect();
    let s = w.stats().unwrap();
    assert!(s.mean.abs() <= 4.0 * s.se, "{s:?}");
    assert!((s.variance - 1.0).abs() < 0.02);
}
