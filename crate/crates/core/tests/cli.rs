use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nfv_fer::config::{ExperimentConfig, OutputFormat};
use nfv_fer::latency::cdf;
use nfv_fer::schemes::{SchemeKind, SchemeSpec};
use nfv_fer::simulate::{McConfig, McMode};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nfv-fer")).args(args).output().unwrap()
}

fn write_config(dir: &TempDir, config: &ExperimentConfig) -> PathBuf {
    let path = dir.path().join("experiment.toml");
    std::fs::write(&path, config.to_toml().unwrap()).unwrap();
    path
}

fn with_output(mut config: ExperimentConfig, dir: &TempDir) -> ExperimentConfig {
    config.output.path = dir.path().join("out");
    config
}

struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    fn read(path: &Path) -> Self {
        let text = std::fs::read_to_string(path).unwrap();
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        let header = lines.next().unwrap().split(',').map(String::from).collect();
        let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
        Self { header, rows }
    }

    fn column(&self, name: &str) -> Vec<String> {
        let i = self.header.iter().position(|h| h == name).unwrap();
        self.rows.iter().map(|r| r[i].clone()).collect()
    }

    fn floats(&self, name: &str) -> Vec<f64> {
        self.column(name).iter().map(|v| v.parse().unwrap()).collect()
    }
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn sweep_writes_one_file_per_scheme_plus_comparison() {
    let dir = TempDir::new().unwrap();
    let config = with_output(ExperimentConfig::baselines(), &dir);
    let path = write_config(&dir, &config);
    let out = run(&["sweep", "--config", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        listing(&config.output.path),
        ["comparison.csv", "nfv.csv", "prl.csv", "rpt.csv", "spc.csv", "ss.csv"]
    );
    let merged = Csv::read(&config.output.path.join("comparison.csv"));
    assert_eq!(merged.rows.len(), 5 * 200);
    assert_eq!(merged.header.join(","), nfv_fer::output::CSV_HEADER);

    let first = std::fs::read(config.output.path.join("comparison.csv")).unwrap();
    assert!(run(&["sweep", "--config", path.to_str().unwrap()]).status.success());
    assert_eq!(first, std::fs::read(config.output.path.join("comparison.csv")).unwrap());
}

#[test]
fn json_sweep_reports_ordered_floors() {
    let dir = TempDir::new().unwrap();
    let config = with_output(ExperimentConfig::scaled_identity(), &dir);
    let path = write_config(&dir, &config);
    let out = run(&["sweep", "--config", path.to_str().unwrap(), "--format", "json"]);
    assert!(out.status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(config.output.path.join("comparison.json")).unwrap()).unwrap();
    let floors: Vec<f64> = doc["curves"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["metadata"]["ub_floor"].as_f64().unwrap())
        .collect();
    assert!(floors[0] < floors[1] && floors[1] < floors[2], "{floors:?}");
    assert_eq!(doc["config"]["output"]["format"], "json");
    assert_eq!(listing(&config.output.path).len(), 4);
}

#[test]
fn analyze_reports_norms_and_error_probabilities() {
    let dir = TempDir::new().unwrap();
    let config = with_output(ExperimentConfig::scaled_identity(), &dir);
    let path = write_config(&dir, &config);
    let out = run(&["analyze", "--config", path.to_str().unwrap()]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("prlx3") && stdout.contains("prlx5"));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(config.output.path.join("analyze.json")).unwrap()).unwrap();
    let rows = doc["schemes"].as_array().unwrap();
    let norms: Vec<u64> = rows.iter().map(|r| r["column_sq_norms"][0].as_u64().unwrap()).collect();
    assert_eq!(norms, [1, 9, 25]);
    let p_e: Vec<f64> = rows.iter().map(|r| r["servers"][0]["p_e_ml"].as_f64().unwrap()).collect();
    assert!(p_e[0] < p_e[1] && p_e[1] < p_e[2]);
}

#[test]
fn compare_summarizes_targets() {
    let dir = TempDir::new().unwrap();
    let config = with_output(ExperimentConfig::baselines(), &dir);
    let path = write_config(&dir, &config);
    let out = run(&["compare", "--config", path.to_str().unwrap()]);
    assert!(out.status.success());
    let csv = Csv::read(&config.output.path.join("compare.csv"));
    assert_eq!(csv.column("scheme"), ["ss", "rpt", "prl", "spc", "nfv"]);
    let nfv = csv.rows.iter().find(|r| r[0] == "nfv").unwrap();
    let prl = csv.rows.iter().find(|r| r[0] == "prl").unwrap();
    let target = csv.header.iter().position(|h| h == "t_ub_1e-3").unwrap();
    assert!(nfv[target].parse::<f64>().unwrap() < prl[target].parse::<f64>().unwrap());
}

fn mc_config(dir: &TempDir, trials: u64, seed: u64) -> ExperimentConfig {
    let mut config = ExperimentConfig::baselines();
    config.schemes = vec![
        SchemeSpec::new(SchemeKind::Prl, Some(8)),
        SchemeSpec::new(SchemeKind::Nfv, None),
    ];
    config.time_grid.points = 30;
    config.mc = Some(McConfig { trials, seed, noise_dim: None, mode: McMode::IndependentBernoulli });
    with_output(config, dir)
}

#[test]
fn seed_changes_only_monte_carlo_columns() {
    let dir = TempDir::new().unwrap();
    let config = mc_config(&dir, 5000, 1);
    let path = write_config(&dir, &config);
    let file = config.output.path.join("comparison.csv");

    assert!(run(&["simulate", "--config", path.to_str().unwrap()]).status.success());
    let a = Csv::read(&file);
    assert!(run(&["simulate", "--config", path.to_str().unwrap(), "--seed", "2"]).status.success());
    let b = Csv::read(&file);

    for col in ["t", "F_t", "ldb", "ldb_valid", "ub"] {
        assert_eq!(a.column(col), b.column(col), "{col}");
    }
    assert_ne!(a.column("mc_fer"), b.column("mc_fer"));
}

#[test]
fn single_trial_has_full_width_interval() {
    let dir = TempDir::new().unwrap();
    let config = mc_config(&dir, 10, 0);
    let path = write_config(&dir, &config);
    let out = run(&["simulate", "--config", path.to_str().unwrap(), "--trials", "1"]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(config.output.path.join("prl.csv")).unwrap();
    assert!(text.contains("\"degenerate_ci\":true"));
    assert!(Csv::read(&config.output.path.join("prl.csv")).floats("mc_ci").iter().all(|&w| w == 1.0));
}

#[test]
fn identity_simulation_matches_binomial_oracle() {
    let dir = TempDir::new().unwrap();
    let mut config = mc_config(&dir, 10_000, 11);
    config.schemes.truncate(1);
    config.time_grid = nfv_fer::config::TimeGrid {
        start: 20.0,
        stop: 400.0,
        points: 5,
        spacing: nfv_fer::config::Spacing::Log,
    };
    let path = write_config(&dir, &config);
    assert!(run(&["simulate", "--config", path.to_str().unwrap()]).status.success());

    let scheme = &config.analyzed_schemes().unwrap()[0];
    let p_e = scheme.profile.probabilities()[0];
    let lat = config.latency.with_block_length(scheme.scheme.n).unwrap();
    let csv = Csv::read(&config.output.path.join("prl.csv"));
    for ((t, fer), ci) in csv.floats("t").into_iter().zip(csv.floats("mc_fer")).zip(csv.floats("mc_ci")) {
        // all eight must be ready
        let exact = 1.0 - (cdf(&lat, t) * (1.0 - p_e)).powi(8);
        assert!((fer - exact).abs() <= ci, "t={t}: {fer} vs {exact} (ci {ci})");
    }
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();

    // config error: empty scheme list
    let mut config = with_output(ExperimentConfig::baselines(), &dir);
    let text = config.to_toml().unwrap();
    let bad = dir.path().join("bad.toml");
    let cut = text.find("[[schemes]]").unwrap();
    let end = text.find("[time_grid]").unwrap();
    std::fs::write(&bad, format!("schemes = []\n{}{}", &text[..cut], &text[end..])).unwrap();
    let out = run(&["analyze", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schemes"));

    // config error: simulate without Monte Carlo settings
    let path = write_config(&dir, &config);
    assert_eq!(run(&["simulate", "--config", path.to_str().unwrap()]).status.code(), Some(2));

    // config error: unknown flag value
    assert_eq!(run(&["sweep", "--format", "xml"]).status.code(), Some(2));

    // size guard: a 25 x 25 identity code is too large to analyze exactly
    let mut custom = SchemeSpec::new(SchemeKind::Custom, None);
    custom.name = "big".into();
    custom.matrix = Some((0..25).map(|i| (0..25).map(|j| u32::from(i == j)).collect()).collect());
    custom.p_prime = 2;
    config.schemes = vec![custom];
    config.frame.length = 500;
    let path = write_config(&dir, &config);
    let out = run(&["analyze", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    // I/O: missing config file
    let missing = dir.path().join("missing.toml");
    assert_eq!(run(&["sweep", "--config", missing.to_str().unwrap()]).status.code(), Some(4));

    // I/O: output directory under a regular file
    let config = with_output(ExperimentConfig::scaled_identity(), &dir);
    let path = write_config(&dir, &config);
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "x").unwrap();
    let out = run(&["sweep", "--config", path.to_str().unwrap(), "--out", blocker.join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn shipped_configs_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut scaled = ExperimentConfig::load(&root.join("scaled_identity.toml")).unwrap();
    let mut baselines = ExperimentConfig::load(&root.join("baselines.toml")).unwrap();
    let simulate = ExperimentConfig::load(&root.join("simulate.toml")).unwrap();
    assert!(simulate.mc.is_some());
    assert_eq!(simulate.output.format, OutputFormat::Csv);
    scaled.output = ExperimentConfig::scaled_identity().output;
    baselines.output = ExperimentConfig::baselines().output;
    assert_eq!(scaled, ExperimentConfig::scaled_identity());
    assert_eq!(baselines, ExperimentConfig::baselines());
}
