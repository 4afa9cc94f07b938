use std::fs;

use expes_cli::main_with_args;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("expes").chain(args.iter().copied());
    let code = main_with_args(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

const SMALL: &[&str] = &["--n", "2000", "--n0", "4000", "--p-ref", "7", "--seed", "3"];

fn with_small<'a>(head: &[&'a str]) -> Vec<&'a str> {
    let mut v: Vec<&str> = head.iter().copied().chain(SMALL.iter().copied()).collect();
    if !head.contains(&"--p-min") {
        v.extend(["--p-min", "2", "--p-max", "5"]);
    }
    v
}

#[test]
fn check_reports_kappa() {
    let (code, out, _) = run(&["check", "--case", "case1"]);
    assert_eq!(code, 0);
    assert!(out.contains("H5: satisfied, κ≈1.93"), "{out}");
    let (code, out, _) = run(&["check", "--case", "case3"]);
    assert_eq!(code, 0);
    assert!(out.contains("H5: violated"), "{out}");
}

#[test]
fn invalid_alpha_is_a_usage_error() {
    let (code, _, err) = run(&["check", "--params", "0,0,1,1,1"]);
    assert_eq!(code, 2);
    assert!(err.contains("alpha"), "{err}");
}

#[test]
fn unknown_scheme_is_a_usage_error() {
    let (code, _, _) = run(&with_small(&[
        "weak-error",
        "--case",
        "case1",
        "--schemes",
        "rk4",
    ]));
    assert_eq!(code, 2);
}

#[test]
fn empty_level_range_is_a_usage_error() {
    let (code, _, _) = run(&["rate", "--case", "case1", "--p-min", "6", "--p-max", "3"]);
    assert_eq!(code, 2);
}

#[test]
fn weak_error_is_byte_identical_across_runs_and_workers() {
    let a = run(&with_small(&[
        "weak-error",
        "--case",
        "case1",
        "--workers",
        "1",
        "-f",
        "x,exp_neg_x2",
    ]));
    let b = run(&with_small(&[
        "weak-error",
        "--case",
        "case1",
        "--workers",
        "4",
        "-f",
        "x,exp_neg_x2",
    ]));
    let c = run(&with_small(&[
        "weak-error",
        "--case",
        "case1",
        "--workers",
        "1",
        "-f",
        "x,exp_neg_x2",
    ]));
    assert_eq!(a.0, 0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.1, c.1);
    assert_eq!(a.1.lines().count(), 1 + 2 * 4);
}

#[test]
fn compare_emits_one_row_per_scheme() {
    let (code, out, _) = run(&with_small(&["compare", "--case", "case1"]));
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "case,scheme,test_fn,p2,p3,p4,p5");
    assert_eq!(lines.len(), 6);
    for id in ["exp-es", "ses", "sms", "stes", "tes"] {
        assert!(
            lines
                .iter()
                .any(|l| l.starts_with(&format!("case1,{id},x,"))),
            "{out}"
        );
    }
}

#[test]
fn divergent_comparison_marks_cells() {
    let (_, out, _) = run(&with_small(&[
        "compare",
        "--case",
        "case2",
        "--schemes",
        "tes",
        "--p-min",
        "1",
        "--p-max",
        "3",
    ]));
    let row = out.lines().nth(1).unwrap();
    assert!(row.ends_with(",-,-,-"), "{row}");
}

#[test]
fn divergence_dominated_table_exits_one() {
    let (code, _, err) = run(&with_small(&[
        "weak-error",
        "--case",
        "case2",
        "--schemes",
        "tes",
        "--p-min",
        "1",
        "--p-max",
        "3",
    ]));
    assert_eq!(code, 1);
    assert!(err.contains("diverged"), "{err}");
}

#[test]
fn rate_summary_has_schema() {
    let (code, out, _) = run(&with_small(&["rate", "--case", "case1"]));
    assert_eq!(code, 0);
    assert!(
        out.starts_with("case,scheme,test_fn,slope,r_squared,p_min,p_max\ncase1,exp-es,x,"),
        "{out}"
    );
}

#[test]
fn reference_uses_cache_and_falls_back_from_analytic() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().to_str().unwrap();
    let args = with_small(&[
        "reference",
        "--case",
        "case2",
        "--reference",
        "analytic",
        "--cache-dir",
        cache,
    ]);
    let (code, first, err) = run(&args);
    assert_eq!(code, 0);
    assert!(err.contains("divergent integral"), "{err}");
    assert!(first.contains(",fine-grid-mc,"), "{first}");
    let (code, second, err) = run(&args);
    assert_eq!(code, 0);
    assert_eq!(first, second);
    assert!(err.contains("read from cache"), "{err}");
}

#[test]
fn reference_of_constant_function_is_one() {
    let (code, out, _) = run(&with_small(&["reference", "--case", "case1", "-f", "one"]));
    assert_eq!(code, 0);
    assert!(
        out.lines()
            .nth(1)
            .unwrap()
            .starts_with("case1,one,1.0000000000e0,0.000e0,analytic"),
        "{out}"
    );
}

#[test]
fn config_file_and_output_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let csv = dir.path().join("out.csv");
    fs::write(
        &cfg,
        format!(
            "n = 2000\nn0 = 4000\np_ref = 7\np_min = 2\np_max = 4\nseed = 3\noutput = {:?}\n\n[[case]]\nid = \"case1\"\n\n[[case]]\nname = \"inline\"\nb2 = 2.0\nsigma = 0.1\nalpha = 1.5\n",
            csv.to_str().unwrap()
        ),
    )
    .unwrap();
    let (code, out, _) = run(&["weak-error", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.is_empty());
    let text = fs::read_to_string(&csv).unwrap();
    let body = |name: &str| -> Vec<String> {
        text.lines()
            .filter(|l| l.starts_with(&format!("{name},")))
            .map(|l| l.split_once(',').unwrap().1.to_string())
            .collect()
    };
    assert_eq!(body("case1").len(), 3);
    // Same parameters, same seed: identical rows.
    assert_eq!(body("case1"), body("inline"));
}

#[test]
fn simulate_dumps_a_path() {
    let (code, out, _) = run(&["simulate", "--case", "case1", "--p-max", "3"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "t,value");
    assert_eq!(lines.len(), 1 + 9);
    assert_eq!(lines[1], "0.0,1.0");
}
