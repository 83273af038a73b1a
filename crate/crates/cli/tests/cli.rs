use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;
use vk_cli::config::ScenarioConfig;

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"))
}

fn scenario(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(scenario_path(name)).unwrap()).unwrap()
}

fn write_config(dir: &Path, value: &Value) -> PathBuf {
    let path = dir.join("scenario.json");
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn vk(cmd: &str, config: &Path, out: &Path) -> Output {
    vk_env(cmd, config, out, None)
}

fn vk_env(cmd: &str, config: &Path, out: &Path, threads: Option<&str>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vapor-kinetics"));
    c.arg(cmd).arg("--config").arg(config).arg("--out").arg(out);
    match threads {
        Some(t) => c.env("VK_THREADS", t),
        None => c.env_remove("VK_THREADS"),
    };
    c.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(rows: &[Vec<String>], k: usize) -> Vec<f64> {
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

/// Scenario with `D` changed and the packet amplitude kept consistent.
fn with_diffusion(mut v: Value, d: f64) -> Value {
    let gamma2 = v["params"]["gamma"].as_f64().unwrap().powi(2);
    let sigma0 = v["params"]["sigma0"].as_f64().unwrap();
    v["params"]["d"] = json!(d);
    v["params"]["d_in"] = json!(d * gamma2 / 2.0);
    v["params"]["c0"] = json!(sigma0 / (std::f64::consts::PI * d * gamma2));
    v
}

#[test]
fn relax_reproduces_figure_regimes() {
    let tmp = TempDir::new().unwrap();
    for (name, variant, extrema) in [("fig1a", "ExcessIonization", 1), ("fig1b", "MonotoneDecay", 0), ("fig2", "TwoExtrema", 2)] {
        let out = tmp.path().join(name);
        let o = vk("relax", &scenario_path(name), &out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let text = stdout(&o);
        assert!(text.contains(&format!("classification: {variant}")), "{text}");
        let (header, rows) = read_csv(&out.join("sigma.csv"));
        assert_eq!(header, ["t", "sigma", "I", "validity_margin"]);
        assert_eq!(rows.len(), 1001);
        let sigma = column(&rows, 1);
        let interior_max = sigma.windows(3).filter(|w| w[1] > w[0] && w[1] > w[2]).count();
        let interior_min = sigma.windows(3).filter(|w| w[1] < w[0] && w[1] < w[2]).count();
        assert_eq!(interior_max + interior_min, extrema, "{name}");
        let svg = std::fs::read_to_string(out.join("sigma.svg")).unwrap();
        assert!(svg.contains("version=\"1.1\""));
        assert!(svg.contains("<polyline"));
    }
}

#[test]
fn outputs_are_deterministic() {
    let tmp = TempDir::new().unwrap();
    for cmd in ["relax", "ee"] {
        let a = tmp.path().join(format!("{cmd}_a"));
        let b = tmp.path().join(format!("{cmd}_b"));
        assert!(vk(cmd, &scenario_path("fig2"), &a).status.success());
        assert!(vk(cmd, &scenario_path("fig2"), &b).status.success());
        let file = if cmd == "relax" { "sigma.csv" } else { "moments.csv" };
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap());
    }
}

#[test]
fn ee_matches_relax() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_path_buf();
    assert!(vk("relax", &scenario_path("fig1a"), &out).status.success());
    assert!(vk("ee", &scenario_path("fig1a"), &out).status.success());
    let (_, relax_rows) = read_csv(&out.join("sigma.csv"));
    let (header, ee_rows) = read_csv(&out.join("moments.csv"));
    assert_eq!(header, ["t", "sigma", "X1", "X2", "alpha2_11", "alpha2_12", "alpha2_21", "alpha2_22"]);
    for (a, b) in column(&relax_rows, 1).iter().zip(column(&ee_rows, 1)) {
        assert!((a - b).abs() <= 1e-6 * a.abs());
    }
    assert!(column(&ee_rows, 2).iter().chain(&column(&ee_rows, 3)).all(|x| *x == 0.0));
}

#[test]
fn ee_without_recombination_grows_exponentially() {
    let tmp = TempDir::new().unwrap();
    let mut v = scenario("fig1a");
    v["params"]["kappa"] = json!(0.0);
    v["time"] = json!({"horizon": 3.0, "samples": 30});
    let cfg = write_config(tmp.path(), &v);
    let o = vk("ee", &cfg, tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = read_csv(&tmp.path().join("moments.csv"));
    for (t, s) in column(&rows, 0).iter().zip(column(&rows, 1)) {
        let want = (1.0 - (-t).exp()).exp();
        assert!((s - want).abs() <= 1e-7 * want, "t={t}: {s} vs {want}");
    }
}

#[test]
fn pde_writes_snapshots_and_moments() {
    let tmp = TempDir::new().unwrap();
    let mut v = scenario("fig1a");
    v["pde"] = json!({"dt": 0.002, "n_steps": 40, "grid": 128, "length": 6.0, "snapshot_stride": 20});
    let cfg = write_config(tmp.path(), &v);
    let out = tmp.path().join("run");
    let o = vk("pde", &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for k in 0..3 {
        let bin = out.join(format!("snapshots/snap_{k:05}.bin"));
        assert_eq!(std::fs::metadata(bin).unwrap().len(), 128 * 128 * 8);
        let header: Value =
            serde_json::from_str(&std::fs::read_to_string(out.join(format!("snapshots/snap_{k:05}.json"))).unwrap()).unwrap();
        assert_eq!(header["nx"], 128);
        assert_eq!(header["Ly"], 6.0);
    }
    let (header, rows) = read_csv(&out.join("pde_moments.csv"));
    assert_eq!(header[0], "t");
    assert_eq!(header[1], "sigma");
    assert_eq!(rows.len(), 3);
    assert!(out.join("pde_sigma.svg").exists());
}

#[test]
fn pde_full_figure_run() {
    let tmp = TempDir::new().unwrap();
    let o = vk("pde", &scenario_path("fig1a"), tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = read_csv(&tmp.path().join("pde_moments.csv"));
    let ts = column(&rows, 0);
    assert!((ts.last().unwrap() - 2.0).abs() < 1e-9);
    assert!(column(&rows, 1).iter().all(|s| s.is_finite() && *s > 0.0));
}

#[test]
fn pde_zero_field_and_local_mode() {
    let tmp = TempDir::new().unwrap();
    let mut v = scenario("fig1a");
    v["pde"] = json!({"dt": 0.002, "n_steps": 10, "grid": 64, "length": 6.0, "snapshot_stride": 10, "initial": "zero"});
    let cfg = write_config(tmp.path(), &v);
    assert!(vk("pde", &cfg, tmp.path()).status.success());
    let (_, rows) = read_csv(&tmp.path().join("pde_moments.csv"));
    assert!(rows.iter().flat_map(|r| r[1..].iter()).all(|x| x.parse::<f64>().unwrap() == 0.0));
    let bytes = std::fs::read(tmp.path().join("snapshots/snap_00001.bin")).unwrap();
    assert!(bytes.iter().all(|b| *b == 0));

    v["pde"] = json!({"dt": 0.002, "n_steps": 20, "grid": 256, "length": 6.0, "snapshot_stride": 10,
                      "interaction": {"mode": "local", "coupling": 0.001}});
    let cfg = write_config(tmp.path(), &v);
    let o = vk("pde", &cfg, tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn compare_reports_failures_with_exit_three() {
    let tmp = TempDir::new().unwrap();
    let mut v = scenario("fig1a");
    v["compare"] = json!({"d_values": [0.04, 0.01]});
    let cfg = write_config(tmp.path(), &v);
    let o = vk("compare", &cfg, tmp.path());
    assert_eq!(o.status.code(), Some(3));
    let text = stdout(&o);
    assert!(text.contains("D = 0.04: no semiclassical solution"), "{text}");
    assert!(text.contains("fitted order undefined"), "{text}");
    let (header, rows) = read_csv(&tmp.path().join("compare.csv"));
    assert_eq!(header, ["D", "l2_error", "count_error_packet", "count_error_moments", "fitted_order", "status"]);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][1], "");
    assert!(rows[1][1].parse::<f64>().unwrap() > 0.0);
}

#[test]
fn compare_with_repeated_d_has_no_order() {
    let tmp = TempDir::new().unwrap();
    let mut v = scenario("fig1a");
    v["compare"] = json!({"d_values": [0.005, 0.005]});
    let cfg = write_config(tmp.path(), &v);
    let o = vk("compare", &cfg, tmp.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("fitted order undefined"));
}

#[test]
fn compare_on_bundled_ladder_passes() {
    let tmp = TempDir::new().unwrap();
    let o = vk_env("compare", &scenario_path("fig1a"), tmp.path(), Some("2"));
    assert!(o.status.success(), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    let (_, rows) = read_csv(&tmp.path().join("compare.csv"));
    let order: f64 = rows[0][4].parse().unwrap();
    assert!(order >= 1.0);
}

#[test]
fn config_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");

    let missing = vk("relax", &tmp.path().join("nope.json"), &out);
    assert_eq!(missing.status.code(), Some(2));

    let mut v = scenario("fig1a");
    v["bogus"] = json!(1);
    assert_eq!(vk("relax", &write_config(tmp.path(), &v), &out).status.code(), Some(2));

    let mut v = scenario("fig1a");
    v["params"]["sigma0"] = json!(1.1);
    assert_eq!(vk("relax", &write_config(tmp.path(), &v), &out).status.code(), Some(2));

    let mut v = scenario("fig1a");
    v["pde"]["grid"] = json!(2048);
    assert_eq!(vk("pde", &write_config(tmp.path(), &v), &out).status.code(), Some(2));

    let mut v = scenario("fig1b");
    v.as_object_mut().unwrap().remove("pde");
    let o = vk("pde", &write_config(tmp.path(), &v), &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no pde section"));

    let o = vk_env("relax", &scenario_path("fig1a"), &out, Some("many"));
    assert_eq!(o.status.code(), Some(2));

    let bad_cli = Command::new(env!("CARGO_BIN_EXE_vapor-kinetics")).arg("relax").output().unwrap();
    assert_eq!(bad_cli.status.code(), Some(2));
}

#[test]
fn validity_failure_exits_three() {
    let tmp = TempDir::new().unwrap();
    let v = with_diffusion(scenario("fig1a"), 0.04);
    let o = vk("relax", &write_config(tmp.path(), &v), tmp.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("validity margin"));
}

#[test]
fn thread_cap_is_accepted() {
    let tmp = TempDir::new().unwrap();
    let o = vk_env("relax", &scenario_path("fig1b"), tmp.path(), Some("1"));
    assert!(o.status.success());
}

#[test]
fn bundled_scenarios_load_and_match_schema() {
    let schema: Value = serde_json::from_str(
        &std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/schema.json")).unwrap(),
    )
    .unwrap();
    let mut documented: Vec<&String> = schema["properties"].as_object().unwrap().keys().collect();
    documented.sort();
    for name in ["fig1a", "fig1b", "fig2"] {
        let cfg = ScenarioConfig::load(&scenario_path(name)).unwrap();
        let mut full = serde_json::to_value(&cfg).unwrap();
        full["compare"] = json!({"d_values": [0.01, 0.005], "t": 1.0, "min_order": 1.0, "max_count_error": 0.05});
        let mut keys: Vec<&String> = full.as_object().unwrap().keys().collect();
        keys.sort();
        assert_eq!(keys, documented);
        let pde_keys: Vec<&String> = schema["properties"]["pde"]["properties"].as_object().unwrap().keys().collect();
        for k in full["pde"].as_object().unwrap().keys() {
            assert!(pde_keys.contains(&k), "{k}");
        }
    }
}
