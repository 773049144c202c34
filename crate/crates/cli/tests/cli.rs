use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nbfts::gibbs::validate_store_dir;

fn nbfts(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nbfts"))
        .args(args)
        .output()
        .unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = nbfts(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        run_ok(&[
            "simulate",
            "--r",
            "1000",
            "--reps",
            "3",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    let files = dir_bytes(&a);
    let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "panel_000.csv",
            "panel_001.csv",
            "panel_002.csv",
            "truth_000.csv",
            "truth_001.csv",
            "truth_002.csv"
        ]
    );
    assert_eq!(files, dir_bytes(&b));
    assert_ne!(files[0].1, files[1].1);
}

#[test]
fn evaluate_matches_hand_computation() {
    let tmp = tempfile::tempdir().unwrap();
    let report = tmp.path().join("report");
    fs::create_dir(&report).unwrap();
    fs::write(
        report.join("tasks.csv"),
        "task_id,variant,era,m0,target_year,mae,ecp,miw,covered,scored,peak_value_lower,peak_value_upper,peak_time_set,peak_value_covered,peak_time_covered\n\
         t1,nb,pre,2,1950,3.0,0.5,6.0,1,2,10,30,3;4,true,true\n\
         t2,nb,pre,2,1951,0.0,1.0,4.0,1,1,4,9,3,false,true\n",
    )
    .unwrap();
    fs::write(
        report.join("cells.csv"),
        "task_id,variant,era,m0,week,actual,point,lower,upper,mean_fda,rw_fda,truth\n\
         t1,nb,pre,2,3,10,9,8,12,11,10,\n\
         t1,nb,pre,2,4,20,15,10,18,14,22,\n\
         t2,nb,pre,2,3,5,5,0,6,7,5,\n\
         t2,nb,pre,2,4,,7,1,3,6,4,\n",
    )
    .unwrap();
    let out = tmp.path().join("summary");
    run_ok(&[
        "evaluate",
        report.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);

    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(
        lines[0],
        "variant,era,m0,tasks,cells,ecp,miw,mae,mae_mean_fda,mae_rw_fda,peak_value_coverage,peak_time_coverage"
    );
    // covered 2 of 3 scored cells; widths 4, 8, 6, 2; task MAEs 3 and 0;
    // Mean-FDA errors (1, 6) and (2); RW-FDA errors (0, 2) and (0)
    assert_eq!(
        lines[1],
        format!("nb,pre,2,2,3,{},5.0,1.5,2.75,0.5,0.5,1.0", 2.0 / 3.0)
    );
    assert_eq!(lines.len(), 2);

    let curves = fs::read_to_string(out.join("mae_by_week.csv")).unwrap();
    assert!(curves.contains("nb,pre,2,3,nb,0.5,2"), "{curves}");
    assert!(curves.contains("nb,pre,2,4,rw_fda,2.0,1"), "{curves}");
}

#[test]
fn fit_writes_a_valid_store() {
    let tmp = tempfile::tempdir().unwrap();
    let sims = tmp.path().join("sims");
    run_ok(&[
        "simulate",
        "--r",
        "1000",
        "--n",
        "10",
        "--m",
        "36",
        "--seed",
        "3",
        "--out",
        sims.to_str().unwrap(),
    ]);
    let draws = tmp.path().join("draws");
    let out = run_ok(&[
        "fit",
        "--counts",
        sims.join("panel_000.csv").to_str().unwrap(),
        "--variant",
        "nb",
        "--k",
        "3",
        "--iterations",
        "120",
        "--burnin",
        "20",
        "--thin",
        "4",
        "--seed",
        "1",
        "--out",
        draws.to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("wrote 25 draws"));
    let store = validate_store_dir(&draws).unwrap();
    assert_eq!((store.meta.n, store.meta.m, store.n_draws()), (10, 36, 25));
}

#[test]
fn forecast_with_truth_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let sims = tmp.path().join("sims");
    run_ok(&[
        "simulate",
        "--r",
        "10",
        "--n",
        "6",
        "--m",
        "34",
        "--seed",
        "5",
        "--out",
        sims.to_str().unwrap(),
    ]);
    let config = tmp.path().join("model.cfg");
    fs::write(
        &config,
        "variant = nb\nk = 2\niterations = 100\nburnin = 50\nthin = 1\nseed = 9\nm0 = 30\n",
    )
    .unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        run_ok(&[
            "forecast",
            "--config",
            config.to_str().unwrap(),
            "--counts",
            sims.join("panel_000.csv").to_str().unwrap(),
            "--truth",
            sims.join("truth_000.csv").to_str().unwrap(),
            "--target-years",
            "5-6",
            "--out",
            out.to_str().unwrap(),
        ]);
        dir_bytes(&out)
    };
    let a = run("a");
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "cells.csv",
            "mae_by_week.csv",
            "peak_draws.csv",
            "tasks.csv"
        ]
    );
    let tasks = String::from_utf8(a[3].1.clone()).unwrap();
    assert_eq!(tasks.lines().count(), 3);
    assert_eq!(a, run("b"));
}

#[test]
fn failures_exit_nonzero_with_an_error_code() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("absent.csv");
    let out = nbfts(&[
        "fit",
        "--counts",
        missing.to_str().unwrap(),
        "--out",
        tmp.path().join("d").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error[E_IO]: "), "{err}");
    assert_eq!(err.lines().count(), 1);

    let counts = tmp.path().join("bad.csv");
    fs::write(&counts, "year,week,count\n1950,1,3\n1950,1,4\n").unwrap();
    let out = nbfts(&[
        "fit",
        "--counts",
        counts.to_str().unwrap(),
        "--out",
        tmp.path().join("d").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[E_PARSE]"));
    assert!(!tmp.path().join("d").exists());

    let out = nbfts(&[
        "simulate",
        "--r=-1",
        "--out",
        tmp.path().join("s").to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[E_INVALID_PARAMETER]"));
}
