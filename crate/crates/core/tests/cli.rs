use std::path::Path;
use std::process::{Command, Output};

use chaolink::harness::parse_csv;
use chaolink::neuralnet::CnnModel;

fn chaolink(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chaolink"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) {
    std::fs::write(dir.join("sim.toml"), body).unwrap();
}

#[test]
fn coeffs_table_has_every_path_and_offset() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "[noise]\nebn0_db = [10.0]\nseed = 1\n");
    let out = chaolink(&["coeffs", "sim.toml"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("l,i,c"));
    // three paths, offsets -8..=8 without the main term
    assert_eq!(lines.count(), 3 * 16);
    assert!(String::from_utf8_lossy(&out.stderr).contains("c_main"));
}

#[test]
fn train_writes_a_loadable_model() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "[channel]\ntaps = [[0.0, 1.0]]\n[noise]\nebn0_db = [inf]\nseed = 2\n",
    );
    let out = chaolink(&["train", "sim.toml", "-o", "m.txt"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let model =
        CnnModel::from_text(&std::fs::read_to_string(dir.path().join("m.txt")).unwrap()).unwrap();
    assert_eq!(model.kernels, 8);
}

#[test]
fn sweep_with_saved_model_covers_every_decoder() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "[noise]\nebn0_db = [inf]\nseed = 3\n");
    assert!(chaolink(&["train", "sim.toml", "-o", "m.txt"], dir.path())
        .status
        .success());
    write_config(
        dir.path(),
        "[noise]\nebn0_db = [inf]\nseed = 3\n[cnn]\nmodel_path = \"m.txt\"\n[sweep]\npayload_bits = 500\nbits_budget = 500\n",
    );
    let out = chaolink(&["sweep", "sim.toml"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let curves = parse_csv(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(curves.len(), 4);
    for c in &curves {
        assert_eq!(c.points.len(), 1);
        assert_eq!(c.points[0].bits_total, 500);
    }
    let genie = curves
        .iter()
        .find(|c| c.decoder.name() == "genie_optimal")
        .unwrap();
    assert_eq!(genie.points[0].bit_errors, 0);
}

#[test]
fn simulate_traces_one_row_per_symbol() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "[noise]\nebn0_db = [12.0]\nseed = 4\n[sweep]\npayload_bits = 50\ndecoders = [\"zero\", \"past\"]\n",
    );
    let out = chaolink(&["simulate", "sim.toml"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    // 64-bit de Bruijn probe plus its 5-bit cyclic extension
    assert_eq!(rows.len(), 69 + 50);
    assert_eq!(rows.iter().filter(|r| r.contains(",payload,")).count(), 50);
}

#[test]
fn bad_config_names_the_field_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "[noise]\nebn0_db = []\nseed = 1\n");
    let out = chaolink(&["sweep", "sim.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.starts_with("error:") && err.contains("noise.ebn0_db"),
        "{err}"
    );

    let missing = chaolink(&["sweep", "nope.toml"], dir.path());
    assert_eq!(missing.status.code(), Some(1));
}
