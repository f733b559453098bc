use std::path::Path;

use sdcons_cli::ExperimentConfig;

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn resolved(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs().join(name)).unwrap().resolve(configs()).unwrap()
}

#[test]
fn resolved_configs_round_trip() {
    for name in ["example1.toml", "example2.toml", "ring4.toml"] {
        let r = resolved(name);
        let again = ExperimentConfig::from_toml(&r.to_toml().unwrap()).unwrap();
        assert_eq!(again, r, "{name}");
        assert_eq!(again.resolve(configs()).unwrap(), r, "{name}");
        assert_eq!(again.digest(), r.digest());
    }
}

#[test]
fn digest_ignores_key_order() {
    let a = r#"
[sampling]
hbar = 2.0
h_min = 0.01

[topology]
graphs = [{ agents = 2, symmetric = true, edges = [[1, 2, 1.5]] }]

[batch]
seed = 9
runs = 4
"#;
    let b = r#"
[batch]
runs = 4
seed = 9

[topology]
graphs = [{ edges = [[1, 2, 1.5]], symmetric = true, agents = 2 }]

[sampling]
h_min = 0.01
hbar = 2.0
"#;
    let ra = ExperimentConfig::from_toml(a).unwrap().resolve(Path::new(".")).unwrap();
    let rb = ExperimentConfig::from_toml(b).unwrap().resolve(Path::new(".")).unwrap();
    assert_eq!(ra.digest(), rb.digest());
    let mut rc = ra.clone();
    rc.batch.seed = 10;
    assert_ne!(ra.digest(), rc.digest());
}

#[test]
fn resolution_fills_defaults() {
    let r = resolved("ring4.toml");
    assert!(r.topology.files.is_empty());
    assert_eq!(r.topology.graphs.len(), 1);
    assert_eq!(r.sampling.h_min, Some(1e-3));
    let d = r.design.as_ref().unwrap();
    // unit ring on four agents: spectrum {0, 2, 2, 4}
    assert!((d.lambda2.unwrap() - 2.0).abs() < 1e-12);
    assert!((d.lambda_n.unwrap() - 4.0).abs() < 1e-12);
    assert_eq!(r.initial.as_ref().unwrap().bounds, vec![(-10.0, 10.0), (-1.0, 1.0)]);
}

#[test]
fn resolution_rejects_ambiguous_configs() {
    let both = r#"
[gain]
k = [[0.1, 0.2]]
[design]
lambda2 = 1.0
[topology]
graphs = [{ agents = 2, symmetric = true, edges = [[1, 2, 1.0]] }]
[sampling]
hbar = 1.0
"#;
    let e = ExperimentConfig::from_toml(both).unwrap().resolve(Path::new(".")).unwrap_err();
    assert_eq!(e.code, 2);

    let no_topology = "[topology]\n[sampling]\nhbar = 1.0\n";
    assert!(ExperimentConfig::from_toml(no_topology).unwrap().resolve(Path::new(".")).is_err());

    assert!(ExperimentConfig::from_toml("[sampling]\nhbar = 1.0\nspeed = 3\n[topology]\n").is_err());
}
