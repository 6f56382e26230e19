use std::path::Path;
use std::process::{Command, Output};

use twoport_core::spectrum_io;

fn twoport(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twoport"))
        .args(args)
        .env_remove("TPF_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn count_prints_the_coefficient() {
    assert_eq!(stdout(&twoport(&["count", "2", "--nc", "3", "--nv", "5"])).trim(), "690");
    assert_eq!(stdout(&twoport(&["count", "1"])).trim(), "30");
}

#[test]
fn series_resistor_halves_the_source() {
    let csv = stdout(&twoport(&["simulate", "--config", "S:R:1", "--term", "load:1"]));
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 512);
    for r in rows {
        assert_eq!(r.split(',').nth(1), Some("0.5"));
    }
}

#[test]
fn bad_input_exits_2() {
    let o = twoport(&["simulate", "--config", "S:R:1;X:C:1u"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`X`"));
    assert_eq!(twoport(&["simulate", "--config", "S:R:1", "--nope"]).status.code(), Some(2));
    assert_eq!(twoport(&["count", "-1"]).status.code(), Some(2));
}

#[test]
fn thread_override_must_be_numeric() {
    let o = Command::new(env!("CARGO_BIN_EXE_twoport"))
        .args(["count", "1"])
        .env("TPF_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn spectrum_outputs_load_back() {
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("s.bin");
    let csv = dir.path().join("s.csv");
    let cfg = "S:L:1m;P:C:10u;S:R:10";
    for (path, fmt) in [(&bin, "bin"), (&csv, "csv")] {
        stdout(&twoport(&[
            "simulate",
            "--config",
            cfg,
            "--term",
            "open",
            "--out",
            fmt,
            "--output",
            path.to_str().unwrap(),
        ]));
    }
    let a = spectrum_io::load(&bin).unwrap();
    let b = spectrum_io::load(&csv).unwrap();
    assert_eq!(a, b);
    let piped = twoport(&["simulate", "--config", cfg, "--term", "open"]);
    assert_eq!(spectrum_io::read_csv(&stdout(&piped).as_bytes()[..]).unwrap(), a);
}

#[test]
fn refine_and_ga_are_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("t.csv");
    stdout(&twoport(&[
        "simulate",
        "--config",
        "S:R:10;P:C:100u",
        "--output",
        target.to_str().unwrap(),
    ]));
    let t = target.to_str().unwrap();
    let r = stdout(&twoport(&["refine", "--config", "S:R:15;P:C:150u", "--target", t]));
    let report: serde_json::Value = serde_json::from_str(r.lines().nth(1).unwrap()).unwrap();
    assert!(report["final_loss"].as_f64().unwrap() < 1e-8);

    let hist = dir.path().join("h.csv");
    let ga = |seed: &str| {
        stdout(&twoport(&[
            "ga",
            "--target",
            t,
            "--generations",
            "20",
            "--seed",
            seed,
            "--history",
            hist.to_str().unwrap(),
        ]))
    };
    let first = ga("4");
    let h1 = std::fs::read_to_string(&hist).unwrap();
    assert_eq!(ga("4"), first);
    assert_eq!(std::fs::read_to_string(&hist).unwrap(), h1);
    let losses: Vec<f64> = h1.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(losses.len(), 20);
    assert!(h1.lines().nth(1).unwrap().starts_with("1,"));
    assert!(losses.windows(2).all(|w| w[1] <= w[0]));
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn dataset_train_predict_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let d = data.to_str().unwrap();
    let counts = stdout(&twoport(&["gen-dataset", "--out", d, "--spec", "reduced", "--seed", "3"]));
    assert!(counts.contains("train 2000"), "{counts}");
    assert_eq!(lines(&data.join("test.jsonl")), 200);

    let model = dir.path().join("m.bin");
    let m = model.to_str().unwrap();
    let train = |mode: &str| {
        twoport(&[
            "train", "--dataset", d, "--mode", mode, "--out", m, "--dims", "desk", "--epochs", "1", "--train-limit",
            "16", "--seed", "1",
        ])
    };
    assert_eq!(train("hyper").status.code(), Some(2));
    stdout(&train("hyper-gru-only"));
    let first = std::fs::read(&model).unwrap();
    stdout(&train("hyper-gru-only"));
    assert_eq!(std::fs::read(&model).unwrap(), first);

    let csv = stdout(&twoport(&["eval", "--model", m, "--dataset", d]));
    assert!(csv.starts_with("length,complete_acc,value_agnostic_acc,n"));
    assert_eq!(csv.lines().count(), 3);

    let spectrum = dir.path().join("s.csv");
    stdout(&twoport(&["simulate", "--config", "S:R:10;P:C:100u", "--output", spectrum.to_str().unwrap()]));
    let o = twoport(&["predict", "--model", m, "--spectrum", spectrum.to_str().unwrap()]);
    // an untrained decoder may stop at once; that is a reported failure, not a crash
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{o:?}");
    if o.status.success() {
        let lit = stdout(&o);
        assert!(lit.trim().parse::<twoport_core::Configuration>().is_ok());
    }
}
