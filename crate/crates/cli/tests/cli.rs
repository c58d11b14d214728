use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    run_env(args, &[])
}

fn run_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_basinscope"));
    cmd.args(args).env_remove("BASINSCOPE_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

/// Largest root of 3x^2 = 1 and the parameter value where mu + x - x^3 loses
/// its lower pair of roots.
fn fold_oracle() -> f64 {
    let x = (1.0f64 / 3.0).sqrt();
    x - x * x * x
}

#[test]
fn equilibria_of_the_cubic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eq.csv");
    let o = run(&[
        "equilibria",
        "--builtin",
        "saddle_node_cubic",
        "--param",
        "mu=0",
        "--box",
        "-2:2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = read(&out);
    assert!(text.starts_with("x,stability,weakest_real,return_time\n"));
    let r = rows(&text);
    let got: Vec<(f64, &str)> = r
        .iter()
        .map(|r| (r[0].parse().unwrap(), r[1].as_str()))
        .collect();
    assert_eq!(
        got,
        vec![(-1.0, "Stable"), (0.0, "Unstable"), (1.0, "Stable")]
    );
}

#[test]
fn continuation_reports_the_fold() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("branch.csv");
    let o = run(&[
        "continue",
        "--builtin",
        "saddle_node_cubic",
        "--sweep",
        "mu=0:1",
        "--from",
        "x=-1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        stderr(&o).lines().next(),
        Some(format!("fold mu={:.6}", fold_oracle()).as_str())
    );
    assert!(stderr(&o).contains("fold mu=0.384900"));
    let r = rows(&read(&out));
    assert_eq!(r[0][0], "0");
    assert_eq!(r[0][1], "-1");
    let last_mu: f64 = r.last().unwrap()[0].parse().unwrap();
    assert!((last_mu - fold_oracle()).abs() < 1e-6, "{last_mu}");
    for row in &r {
        let mu: f64 = row[0].parse().unwrap();
        let x: f64 = row[1].parse().unwrap();
        assert!((mu + x - x * x * x).abs() < 1e-7, "{row:?}");
    }
}

#[test]
fn classify_capped_excursion_is_irreversible() {
    let o = run(&[
        "classify",
        "--builtin",
        "saddle_node_cubic",
        "--mu0",
        "0",
        "--excursion",
        "-0.5",
        "--accessible",
        "-1:0.3",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(
        stderr(&o).contains("verdict=Irreversible restoring=none"),
        "{}",
        stderr(&o)
    );
    let trace = stdout(&o);
    assert!(trace.starts_with("step,mu,x,note\n"));
}

#[test]
fn classify_wide_range_restores_past_the_fold() {
    let o = run(&[
        "classify",
        "--builtin",
        "saddle_node_cubic",
        "--mu0",
        "0",
        "--excursion",
        "-0.5",
        "--accessible",
        "-1:1",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let err = stderr(&o);
    let value: f64 = err
        .split("restoring=")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(err.contains("verdict=Hysteretic"), "{err}");
    assert!((value - fold_oracle()).abs() < 1e-3, "{value}");
}

#[test]
fn exit_codes() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["equilibria", "--box", "-2:2"])), 1);
    assert_eq!(
        code(&run(&["equilibria", "--builtin", "nope", "--box", "-2:2"])),
        1
    );
    assert_eq!(
        code(&run(&[
            "equilibria",
            "--builtin",
            "saddle_node_cubic",
            "--param",
            "k=1",
            "--box",
            "-2:2"
        ])),
        1
    );
    assert_eq!(
        code(&run(&[
            "equilibria",
            "--builtin",
            "saddle_node_cubic",
            "--box",
            "2:-2"
        ])),
        1
    );
    // Forcing beyond the fold pushes the state out of its basin.
    let o = run(&[
        "resistance",
        "--builtin",
        "saddle_node_cubic",
        "--from",
        "-1",
        "--direction",
        "1",
        "--magnitude",
        "0.5",
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    // Too short a horizon to settle anywhere.
    let o = run(&[
        "kick",
        "simulate",
        "--builtin",
        "saddle_node_cubic",
        "--box",
        "-2:2",
        "--from",
        "-0.5",
        "--direction",
        "1",
        "--magnitude",
        "0.1",
        "--period",
        "1",
        "--t-max",
        "0.01",
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn model_file_and_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("logistic.json");
    std::fs::write(
        &good,
        r#"{"name": "logistic", "state": ["n"], "params": {"r": 1.5, "k": 2.0}, "rhs": {"n": "r*n*(1 - n/k)"}}"#,
    )
    .unwrap();
    let o = run(&[
        "equilibria",
        "--model",
        good.to_str().unwrap(),
        "--box",
        "-1:3",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 2);
    assert_eq!((r[0][0].as_str(), r[0][1].as_str()), ("0", "Unstable"));
    assert_eq!((r[1][0].as_str(), r[1][1].as_str()), ("2", "Stable"));
    assert_eq!(r[1][2], "-1.5");

    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"name": "bad", "state": ["x"], "params": {}, "rhs": {"y": "x"}}"#,
    )
    .unwrap();
    assert_eq!(
        code(&run(&[
            "equilibria",
            "--model",
            bad.to_str().unwrap(),
            "--box",
            "-1:1"
        ])),
        1
    );
    let o = run(&[
        "equilibria",
        "--model",
        dir.path().join("missing.json").to_str().unwrap(),
        "--box",
        "-1:1",
    ]);
    assert_eq!(code(&o), 1);
}

fn basin_args(out: &Path) -> Vec<String> {
    [
        "basin",
        "--builtin",
        "double_well_2d",
        "--box",
        "-2:2",
        "--resolution",
        "24",
        "--out",
        out.to_str().unwrap(),
    ]
    .map(String::from)
    .to_vec()
}

#[test]
fn repeated_and_sequential_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let outs: Vec<_> = ["a.csv", "b.csv", "seq.csv"]
        .iter()
        .map(|n| dir.path().join(n))
        .collect();
    for (i, out) in outs.iter().enumerate() {
        let args = basin_args(out);
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let env: &[(&str, &str)] = if i == 2 {
            &[("BASINSCOPE_THREADS", "0")]
        } else {
            &[]
        };
        let o = run_env(&args, env);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = std::fs::read(&outs[0]).unwrap();
    assert_eq!(a, std::fs::read(&outs[1]).unwrap());
    assert_eq!(a, std::fs::read(&outs[2]).unwrap());

    let sweep = [
        "kick",
        "sweep",
        "--builtin",
        "saddle_node_cubic",
        "--box",
        "-2:2",
        "--from",
        "-1",
        "--direction",
        "1",
        "--periods",
        "0.1,1,10",
        "--horizon",
        "30",
    ];
    let first = run(&sweep);
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    let seq = run_env(&sweep, &[("BASINSCOPE_THREADS", "0")]);
    let two = run_env(&sweep, &[("BASINSCOPE_THREADS", "2")]);
    assert_eq!(first.stdout, seq.stdout);
    assert_eq!(first.stdout, two.stdout);
}

#[test]
fn csv_numbers_carry_nine_significant_digits() {
    let o = run(&[
        "landscape",
        "--builtin",
        "saddle_node_cubic",
        "--range",
        "-1.5:1.5",
        "--samples",
        "7",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for row in rows(&stdout(&o)) {
        for field in row {
            let digits = field
                .trim_start_matches('-')
                .split(['e', 'E'])
                .next()
                .unwrap()
                .chars()
                .filter(char::is_ascii_digit)
                .collect::<String>();
            assert!(digits.trim_start_matches('0').len() <= 9, "{field}");
        }
    }
    // U(x) = x^4/4 - x^2/2 at mu = 0: the hump at 0 sits 1/4 above both wells.
    let o = run(&[
        "landscape",
        "--builtin",
        "saddle_node_cubic",
        "--range",
        "-1:1",
        "--samples",
        "2001",
    ]);
    let r = rows(&stdout(&o));
    let u: Vec<f64> = [0, 1000, 2000]
        .iter()
        .map(|&i| r[i][1].parse().unwrap())
        .collect();
    assert!(
        (u[1] - u[0] - 0.25).abs() < 1e-5 && (u[1] - u[2] - 0.25).abs() < 1e-5,
        "{u:?}"
    );
}

#[test]
fn json_mirrors_csv() {
    let common = [
        "equilibria",
        "--builtin",
        "linear_1d",
        "--param",
        "mu=0.5",
        "--param",
        "k=2",
        "--box",
        "-2:2",
    ];
    let csv = run(&common);
    let mut json_args = common.to_vec();
    json_args.extend(["--format", "json", "--seed", "7"]);
    let json = run(&json_args);
    assert_eq!(code(&json), 0, "{}", stderr(&json));
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["meta"]["model"], "linear_1d");
    assert_eq!(v["meta"]["command"], "equilibria");
    assert_eq!(v["meta"]["seed"], 7);
    assert_eq!(v["meta"]["overrides"]["mu"], 0.5);
    assert_eq!(v["meta"]["overrides"]["k"], 2.0);
    let rows_json = v["rows"].as_array().unwrap();
    let rows_csv = rows(&stdout(&csv));
    assert_eq!(rows_json.len(), rows_csv.len());
    // mu - k x = 0 at x = mu / k
    assert_eq!(rows_json[0]["x"], 0.25);
    assert_eq!(rows_json[0]["stability"], "Stable");
    assert_eq!(rows_csv[0][0], "0.25");
    let keys: Vec<&String> = rows_json[0].as_object().unwrap().keys().collect();
    assert_eq!(keys, ["x", "stability", "weakest_real", "return_time"]);
}

#[test]
fn distances_and_kicks() {
    let o = run(&[
        "distance",
        "threshold",
        "--builtin",
        "saddle_node_cubic",
        "--box",
        "-2:2",
        "--resolution",
        "64",
        "--point",
        "-1",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = rows(&stdout(&o));
    let d: f64 = r[0][0].parse().unwrap();
    let cell: f64 = r[0][1].parse().unwrap();
    assert!((d - 1.0).abs() <= cell, "{d}");

    // The threshold distance is measured from stable equilibria only.
    let o = run(&[
        "distance",
        "threshold",
        "--builtin",
        "saddle_node_cubic",
        "--box",
        "-2:2",
        "--point",
        "0",
    ]);
    assert_eq!(code(&o), 2);

    let o = run(&[
        "distance",
        "directional",
        "--builtin",
        "double_well_2d",
        "--box",
        "-2:2",
        "--point",
        "x=-1,y=0",
        "--direction",
        "1,0",
        "--direction",
        "0,1",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = rows(&stdout(&o));
    let d: f64 = r[0][2].parse().unwrap();
    assert!((d - 1.0).abs() < 1e-4, "{d}");
    assert_eq!(r[1][2], "none");
    assert!(stderr(&o).contains("min distance="));

    let o = run(&[
        "kick",
        "simulate",
        "--builtin",
        "saddle_node_cubic",
        "--box",
        "-2:2",
        "--from",
        "-1",
        "--direction",
        "1",
        "--magnitude",
        "0.5",
        "--period",
        "10",
        "--count",
        "3",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("false,3,"));
}

#[test]
fn basin_writes_separatrix_and_expanded_reports_precariousness() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("map.csv");
    let sep = dir.path().join("sep.csv");
    let o = run(&[
        "basin",
        "--builtin",
        "double_well_2d",
        "--box",
        "-2:2",
        "--resolution",
        "16",
        "--out",
        out.to_str().unwrap(),
        "--separatrix-out",
        sep.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(rows(&read(&out)).len(), 256);
    for p in rows(&read(&sep)) {
        assert_eq!(p[0], "0");
    }

    let o = run(&[
        "expanded",
        "--builtin",
        "saddle_node_cubic",
        "--sweep",
        "mu=-1:1",
        "--box",
        "-2:2",
        "--resolution",
        "32",
        "--point",
        "-1,0",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let err = stderr(&o);
    let field = |name: &str| -> f64 {
        err.split(&format!("{name}="))
            .nth(1)
            .and_then(|s| s.split_whitespace().next())
            .unwrap()
            .parse()
            .unwrap()
    };
    let (d, cell) = (field("precariousness"), field("uncertainty"));
    assert!(
        (d - fold_oracle()).abs() <= cell,
        "{d} vs {}",
        fold_oracle()
    );
}

#[test]
fn csd_and_resistance() {
    let o = run(&[
        "csd",
        "--builtin",
        "saddle_node_cubic",
        "--sweep",
        "mu=0:1",
        "--from",
        "-1",
        "--samples",
        "5",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 5);
    // recovery rate at mu = 0 is |f'(-1)| = 2
    assert_eq!(r[0], ["0", "2"]);
    let rates: Vec<f64> = r.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(rates.windows(2).all(|w| w[1] < w[0]));

    let o = run(&[
        "resistance",
        "--builtin",
        "linear_1d",
        "--param",
        "k=2",
        "--from",
        "0",
        "--direction",
        "1",
        "--magnitude",
        "0.1",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = rows(&stdout(&o));
    let v: f64 = r[0][1].parse().unwrap();
    assert!((v - 2.0).abs() < 1e-6, "{v}");
}
