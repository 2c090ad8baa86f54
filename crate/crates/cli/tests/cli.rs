use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn share(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_share")).args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn manifest_value(dir: &Path, key: &str) -> Option<String> {
    let text = fs::read_to_string(dir.join("manifest.txt")).ok()?;
    text.lines().filter_map(|l| l.split_once(" = ")).find(|(k, _)| *k == key).map(|(_, v)| v.to_string())
}

/// Twelve lots and two noiseless days: quick to train on.
fn small_dataset(dir: &Path) {
    let out = share(&[
        "gen-data",
        "--out",
        dir.to_str().unwrap(),
        "--seed",
        "3",
        "--lots",
        "12",
        "--days",
        "2",
        "--noise",
        "0",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn gen_data_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = share(&["gen-data", "--out", dir.to_str().unwrap(), "--seed", "7", "--lots", "15", "--days", "1"]);
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(stdout(&out).contains("wrote 15 lots"));
    }
    for file in ["city.csv", "series.csv", "manifest.txt"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    assert_eq!(manifest_value(&a, "city.seed").as_deref(), Some("7"));
}

#[test]
fn grad_check_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("grad.csv");
    let out = share(&["grad-check", "--csv", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}{}", stdout(&out), stderr(&out));
    let text = fs::read_to_string(csv).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.ends_with(",true")), "{text}");
}

#[test]
fn train_evaluate_predict_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let ck = tmp.path().join("ck");
    small_dataset(&data);
    let (d, c) = (data.to_str().unwrap(), ck.to_str().unwrap());

    let out = share(&["train", "--data", d, "--out", c, "--epochs", "2", "--windows-per-epoch", "10"]);
    assert!(out.status.success(), "{}", stderr(&out));
    for file in ["params.bin", "manifest.txt", "metrics.csv", "test_report.csv"] {
        assert!(ck.join(file).exists(), "{file}");
    }
    let metrics = fs::read_to_string(ck.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,split,horizon,lot_class,mae,rmse,o1,o2,o3\n"));

    let out = share(&["evaluate", "--data", d, "--checkpoint", c, "--stride", "4"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = fs::read_to_string(ck.join("eval_test.csv")).unwrap();
    assert!(report.starts_with("variant,seed,lot_class,horizon,mae,rmse\n"));
    // Three lot classes times three horizons plus an overall row each.
    assert_eq!(report.lines().count(), 1 + 3 * 4);

    let out = share(&["predict", "--data", d, "--checkpoint", c, "--start", "20"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("lot,labeled,horizon,step,predicted,actual"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 12 * 3);
    for r in &rows {
        let predicted: f64 = r[4].parse().unwrap();
        assert!(predicted >= 0.0);
        assert_eq!(r[3].parse::<usize>().unwrap(), 20 + 12 + r[2].parse::<usize>().unwrap() - 1);
    }
}

#[test]
fn config_file_then_set_then_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let ck = tmp.path().join("ck");
    small_dataset(&data);
    let config = tmp.path().join("run.conf");
    fs::write(&config, "# layered\nrun.hidden = 6\nrun.epochs = 5\nrun.lr = 0.01\n").unwrap();
    let out = share(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        ck.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--set",
        "run.hidden=4",
        "--set",
        "run.windows_per_epoch=5",
        "--epochs",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(manifest_value(&ck, "run.hidden").as_deref(), Some("4"));
    assert_eq!(manifest_value(&ck, "run.epochs").as_deref(), Some("1"));
    assert_eq!(manifest_value(&ck, "run.lr").as_deref(), Some("0.01"));
    assert_eq!(manifest_value(&ck, "model.hidden").as_deref(), Some("4"));
}

#[test]
fn errors_are_one_line_with_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nothing");
    let cases: [(&[&str], i32, &str); 4] = [
        (&["train", "--data", missing.to_str().unwrap(), "--out", "x"], 1, "error: reading dataset"),
        (&["train", "--bogus"], 2, "--bogus"),
        (&["gen-data", "--out", "x", "--set", "city.colour=red"], 1, "unknown config key `city.colour`"),
        (&["grad-check", "--latent-scaling", "sideways"], 1, "unknown latent scaling"),
    ];
    for (args, code, needle) in cases {
        let out = share(args);
        assert_eq!(out.status.code(), Some(code), "{args:?}");
        let err = stderr(&out);
        assert_eq!(err.trim_end().lines().count(), 1, "{err}");
        assert!(err.contains(needle), "{err}");
    }
}
