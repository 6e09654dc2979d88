use std::process::{Command, Output};

use bandred::bench::{gen_sym, load_matrix, save_matrix, CSV_HEADER};
use bandred::oracle::jacobi_eigen;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bandred"))
        .args(args)
        .output()
        .unwrap()
}

fn rows(o: &Output) -> Vec<Vec<String>> {
    let text = String::from_utf8(o.stdout.clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

/// Drops the timing columns.
fn stable(r: &[String]) -> Vec<String> {
    r.iter()
        .enumerate()
        .filter(|(i, _)| *i != 7 && *i != 8)
        .map(|(_, v)| v.clone())
        .collect()
}

#[test]
fn sevp_ref_verify_within_tolerance() {
    let o = run(&[
        "--algo", "sevp-ref", "--n", "64", "--w", "8", "--b", "4", "--seed", "1", "--verify",
    ]);
    assert!(o.status.success());
    let r = rows(&o);
    assert_eq!(r.len(), 1);
    let dev: f64 = r[0][9].parse().unwrap();
    let norm = jacobi_eigen(&gen_sym(64, 1).unwrap()).unwrap()[0];
    assert!(dev <= 1e-11 * norm, "{dev:e}");
}

#[test]
fn v1_with_wide_panel_is_a_config_error() {
    let o = run(&["--algo", "sevp-v1", "--n", "64", "--w", "8", "--b", "8"]);
    assert!(!o.status.success());
    assert!(o.stdout.is_empty());
    assert!(String::from_utf8_lossy(&o.stderr).contains("2b <= w"));
}

#[test]
fn gflops_is_nominal_over_seconds() {
    let o = run(&["--algo", "sevp-ref", "--n", "300", "--w", "16", "--b", "16"]);
    let r = &rows(&o)[0];
    let secs: f64 = r[7].parse().unwrap();
    let gf: f64 = r[8].parse().unwrap();
    let want = 4.0 * 300f64.powi(3) / 3.0 / secs / 1e9;
    assert!((gf - want).abs() <= 5e-5 + 1e-5 * want, "{gf} vs {want}");
    assert_eq!(r[9], "");
}

#[test]
fn single_value_sweep_matches_plain_run() {
    let base = [
        "--algo", "svd-v2", "--n", "30", "--m", "40", "--w", "6", "--b", "3", "--verify",
    ];
    let plain = rows(&run(&base));
    let sw = rows(&run(&[
        "--algo",
        "svd-v2",
        "--n",
        "30",
        "--m",
        "40",
        "--w",
        "6",
        "--verify",
        "--b-sweep",
        "--b-start",
        "3",
        "--b-end",
        "3",
    ]));
    assert_eq!(sw.len(), 2);
    assert_eq!(stable(&plain[0]), stable(&sw[0]));
    let mut flagged = stable(&sw[0]);
    *flagged.last_mut().unwrap() = "1".into();
    assert_eq!(stable(&sw[1]), flagged);
}

#[test]
fn v1_sweep_caps_at_half_bandwidth() {
    let r = rows(&run(&[
        "--algo",
        "sevp-v1",
        "--n",
        "48",
        "--w",
        "16",
        "--b-sweep",
        "--b-start",
        "2",
        "--b-step",
        "2",
    ]));
    let bs: Vec<usize> = r.iter().map(|x| x[4].parse().unwrap()).collect();
    assert_eq!(bs[..4], [2, 4, 6, 8]);
    assert_eq!(r[4][10], "1");
    assert!(bs[..4].contains(&bs[4]));
}

#[test]
fn sweep_512_reports_legal_best() {
    let o = run(&["--algo", "sevp-v2", "--n", "512", "--w", "32", "--b-sweep"]);
    assert!(o.status.success());
    let r = rows(&o);
    assert_eq!(r.len(), 3);
    let best = r.last().unwrap();
    assert_eq!(best[10], "1");
    let b: usize = best[4].parse().unwrap();
    assert!(b == 16 || b == 32);
    let max = r[..2]
        .iter()
        .map(|x| x[8].parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    assert_eq!(best[8].parse::<f64>().unwrap(), max);
}

#[test]
fn verification_is_reproducible_across_group_splits() {
    let mut seen = Vec::new();
    for ts in ["0", "1", "2"] {
        let o = run(&[
            "--algo",
            "svd-v1",
            "--n",
            "36",
            "--w",
            "8",
            "--b",
            "4",
            "--threads",
            "4",
            "--ts",
            ts,
            "--verify",
        ]);
        assert!(o.status.success());
        let mut r = stable(&rows(&o)[0]);
        r.drain(5..7);
        seen.push(r);
    }
    assert_eq!(seen[0], seen[1]);
    assert_eq!(seen[1], seen[2]);
}

#[test]
fn loaded_input_matches_generated_input() {
    let dir = std::env::temp_dir().join(format!("bandred-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let input = dir.join("input.txt");
    let (out1, out2) = (dir.join("gen.txt"), dir.join("load.txt"));
    let trace = dir.join("trace.tsv");
    save_matrix(&gen_sym(24, 3).unwrap(), &input).unwrap();
    let common = ["--algo", "sevp-v1", "--w", "4", "--b", "2"];
    let o = run(&[
        &common[..],
        &["--n", "24", "--seed", "3", "--dump", out1.to_str().unwrap()],
    ]
    .concat());
    assert!(o.status.success());
    let o = run(&[
        &common[..],
        &[
            "--load",
            input.to_str().unwrap(),
            "--dump",
            out2.to_str().unwrap(),
            "--trace",
            trace.to_str().unwrap(),
        ],
    ]
    .concat());
    assert!(o.status.success());
    let band = load_matrix(&out1).unwrap();
    assert_eq!((band.rows(), band.cols()), (24, 24));
    assert!(load_matrix(&out2).unwrap().bit_eq(&band));
    let t = std::fs::read_to_string(&trace).unwrap();
    assert!(t.lines().next().unwrap().starts_with("qr@0\t"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn depgraph_mode_prints_three_cases() {
    let mut got = Vec::new();
    for ratio in ["1", "2", "3"] {
        let o = run(&[
            "--algo", "depgraph", "--form", "triband", "--n", "32", "--b", "2", "--ratio", ratio,
        ]);
        assert!(o.status.success());
        let text = String::from_utf8(o.stdout).unwrap();
        got.push(
            text.lines()
                .nth(1)
                .unwrap()
                .rsplitn(4, ',')
                .take(3)
                .collect::<Vec<_>>()
                .join(","),
        );
    }
    assert_eq!(
        got,
        ["false,false,false", "false,true,true", "true,true,true"]
    );
}

#[test]
fn depgraph_dot_export() {
    let path = std::env::temp_dir().join(format!("bandred-dot-{}.dot", std::process::id()));
    let o = run(&[
        "--algo",
        "depgraph",
        "--form",
        "band",
        "--n",
        "16",
        "--b",
        "2",
        "--ratio",
        "2",
        "--dot",
        path.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let dot = std::fs::read_to_string(&path).unwrap();
    assert!(dot.starts_with("digraph"));
    std::fs::remove_file(&path).unwrap();
}

#[test]
fn bad_flags_fail() {
    assert!(!run(&["--algo", "sevp-ref", "--n", "16", "--w", "4"])
        .status
        .success());
    assert!(
        !run(&["--algo", "sevp-ref", "--n", "16", "--m", "20", "--w", "4", "--b", "2"])
            .status
            .success()
    );
    assert!(
        !run(&["--algo", "svd-ref", "--n", "200", "--w", "4", "--b", "2", "--verify"])
            .status
            .success()
    );
    assert!(!run(&["--algo", "nope"]).status.success());
    assert!(!run(&[
        "--algo",
        "sevp-ref",
        "--n",
        "16",
        "--w",
        "4",
        "--b",
        "2",
        "--threads",
        "2",
        "--ts",
        "2"
    ])
    .status
    .success());
}
