use std::path::Path;
use std::process::Command;
use ucbeam::bands::Resolution;
use ucbeam::cli::{emit_reports, run_pipeline, Format, RunConfig, Scenario, Stage, DECAY_HEADER};

fn small(stage: Stage) -> RunConfig {
    RunConfig { stage, n0: 12, nmax: 15, resolution: Resolution { sigma: 65, ybar: 9, s: 65 }, ..RunConfig::default() }
}

fn reference() -> RunConfig {
    RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("config/reference.json")).unwrap()
}

#[test]
fn reference_config_is_the_default() {
    assert_eq!(reference(), RunConfig { out: "out".into(), ..RunConfig::default() });
}

#[test]
fn config_round_trips_bit_identically() {
    let mut c = reference();
    c.scenario = Scenario::PlanarLocalized;
    c.bump = Some(ucbeam::eikonal::BumpProfile { sigma1: 0.05, inner: vec![(-0.3, 0.3)], outer: vec![(-0.8, 0.8)] });
    c.tolerances.certify_interior = 1.0 / 3.0;
    let text = c.to_json();
    let back: RunConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.to_json(), text);
}

#[test]
fn small_band_index_fails_with_band_context() {
    let cfg = RunConfig { n0: 5, nmax: 8, ..small(Stage::FindSurfaces) };
    let err = run_pipeline(cfg).unwrap_err();
    assert_eq!(err.name(), "RootOutsideOverlap");
    assert!(err.to_string().contains("band 5"), "{err}");
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = small(Stage::Full);
    c.tolerances.conjugation = 0.0;
    assert_eq!(run_pipeline(c).unwrap_err().name(), "Config");
    let c = RunConfig { scenario: Scenario::PlanarLocalized, ..small(Stage::Full) };
    assert_eq!(run_pipeline(c).unwrap_err().name(), "Config");
}

#[test]
fn reports_have_the_contracted_shape() {
    let dir = tempfile::tempdir().unwrap();
    let res = run_pipeline(small(Stage::Assemble)).unwrap();
    let files = emit_reports(&res, &[Format::Json, Format::Csv, Format::Fields], dir.path()).unwrap();
    let decay = std::fs::read_to_string(dir.path().join("decay_u.csv")).unwrap();
    assert_eq!(decay.lines().next(), Some(DECAY_HEADER));
    assert_eq!(DECAY_HEADER, "sigma0,N,mu,sup_value");
    let surf = std::fs::read_to_string(dir.path().join("surface_n12.csv")).unwrap();
    let beams = &res.artifacts.as_ref().unwrap().beams;
    assert_eq!(surf.lines().count() - 1, beams[0].envelope.grid.slice_len());
    assert!(files.iter().any(|f| f.ends_with("envelope_n12.bin")));

    let schema: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/result.schema.json")).unwrap())
            .unwrap();
    let result: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("result.json")).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    assert!(validator.is_valid(&result));
    assert!(!validator.is_valid(&serde_json::json!({"checks": []})));
}

#[test]
fn reruns_are_identical_apart_from_timings() {
    let strip = |c: RunConfig| {
        let mut v = serde_json::to_value(run_pipeline(c).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("timings");
        v["aads"]["gncc_seconds"] = serde_json::Value::Null;
        for c in v["checks"].as_array_mut().unwrap() {
            if c["name"] == "gncc-runtime" {
                c["measured"] = serde_json::Value::Null;
            }
        }
        v
    };
    let cfg = RunConfig { scenario: Scenario::PureAds, ..RunConfig::default() };
    assert_eq!(strip(cfg.clone()), strip(cfg));
}

#[test]
fn exit_code_follows_invariants() {
    let bin = env!("CARGO_BIN_EXE_ucbeam");
    let dir = tempfile::tempdir().unwrap();
    let ok = Command::new(bin).args(["aads-gncc", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("PASS [11] gncc-linear-zero"));

    let mut strict = RunConfig { scenario: Scenario::FgGeneric, ..RunConfig::default() };
    strict.tolerances.gncc_zero = 1e-30;
    let path = dir.path().join("strict.json");
    std::fs::write(&path, strict.to_json()).unwrap();
    let fail = Command::new(bin).args(["--stage", "aads-gncc", "--config"]).arg(&path).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(fail.status.code(), Some(1));

    let bad = RunConfig { n0: 5, nmax: 6, ..small(Stage::FindSurfaces) };
    std::fs::write(&path, bad.to_json()).unwrap();
    let err = Command::new(bin).args(["find-surfaces", "--config"]).arg(&path).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(err.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&err.stderr).contains("band 5"));
}
