use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_semirobin"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("semirobin-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn config(dir: &Path, body: &str) -> PathBuf {
    let text = format!(
        "[meta]\nschema_version = 1\n[domain]\nkind = interval\nb = 3.141592653589793\nn = 96\n\
         [potential]\nvalue = -0.5\n{body}\n[output]\ndir = \"{}\"\nprefix = t\n",
        dir.display()
    );
    let p = dir.join("problem.ini");
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&Path], sub: &str) -> Output {
    bin().arg(sub).args(args).output().unwrap()
}

#[test]
fn spectrum_writes_table_and_certificates() {
    let d = scratch("spectrum");
    let cfg = config(&d, "[reaction]\nm = 1\nl = 3\n[spectrum]\ncount = 6\n");
    let out = run(&[&cfg], "spectrum");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(d.join("t_eigenvalues.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("index,value,cluster,residual"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("t_spectrum.json")).unwrap()).unwrap();
    assert!(json["coercivity"]["c0"].as_f64().unwrap() > 0.0);
    assert!(json["first_eigen"]["failures"].as_array().unwrap().is_empty());
}

#[test]
fn check_f_exit_codes() {
    let d = scratch("checkf");
    let cfg = config(&d, "[reaction]\nm = 1\nl = 3\n");
    assert_eq!(run(&[&cfg], "check-f").status.code(), Some(0));
    let cfg = config(&d, "[reaction]\nkind = linear\nslope = 0.5\nm = 1\nl = 3\n");
    let out = run(&[&cfg], "check-f");
    assert_eq!(out.status.code(), Some(1));
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.lines().any(|l| l.starts_with("H(f)(iii)") && l.contains("FAIL") && l.contains("witness")));
}

#[test]
fn solve_then_verify() {
    let d = scratch("solve");
    let cfg = config(&d, "[reaction]\nm = 1\nl = 3\n[solver]\nseed = 3\n");
    let out = run(&[&cfg], "solve");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(d.join("t_report.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(json["solutions"].as_array().unwrap().len(), 2);
    assert_eq!(json["passed"], serde_json::Value::Bool(true));
    // resolved defaults are echoed
    assert_eq!(json["config"]["solver"]["plan"]["tol_res"].as_f64(), Some(1e-7));

    let sol = d.join("t_solution_1.csv");
    assert_eq!(run(&[&cfg, &sol], "verify").status.code(), Some(0));

    // same seed, same bytes
    let first = std::fs::read(&sol).unwrap();
    assert_eq!(run(&[&cfg], "solve").status.code(), Some(0));
    assert_eq!(std::fs::read(&sol).unwrap(), first);
    assert_eq!(std::fs::read_to_string(d.join("t_report.json")).unwrap(), report);

    // a perturbed solution is rejected
    let text = std::fs::read_to_string(&sol).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let last = lines[10].rsplit_once(',').unwrap().0.to_string();
    lines[10] = format!("{last},1.0");
    let bad = d.join("bad.csv");
    std::fs::write(&bad, lines.join("\n")).unwrap();
    assert_eq!(run(&[&cfg, &bad], "verify").status.code(), Some(1));
}

#[test]
fn usage_and_schema_errors_exit_2() {
    let d = scratch("usage");
    assert_eq!(bin().output().unwrap().status.code(), Some(2));
    assert_eq!(bin().arg("solve").output().unwrap().status.code(), Some(2));
    let cfg = config(&d, "[reaction]\nm = 1\nl = 2\n");
    let out = run(&[&cfg], "solve");
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("reaction.l") && err.contains("H(f)(iv)"), "{err}");
    assert!(err.contains("usage:"));
    let cfg = config(&d, "[reaction]\nm = 1\nl = 3\nfoo = 1\n");
    let out = run(&[&cfg], "spectrum");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`foo`"));
    let missing = d.join("nope.ini");
    assert_eq!(run(&[&missing], "solve").status.code(), Some(2));
}

#[test]
fn nodal_potential_file_is_resolved_next_to_config() {
    let d = scratch("nodal");
    let mut csv = String::from("index,value\n");
    for i in 0..96 {
        csv.push_str(&format!("{i},-0.5\n"));
    }
    std::fs::write(d.join("xi.csv"), csv).unwrap();
    let text = format!(
        "[domain]\nkind = interval\nb = 3.141592653589793\nn = 96\n[potential]\nkind = nodal\nfile = xi.csv\n\
         [reaction]\nm = 1\nl = 3\n[output]\ndir = \"{}\"\nprefix = n\n",
        d.display()
    );
    std::fs::write(d.join("p.ini"), text).unwrap();
    let out = run(&[&d.join("p.ini")], "spectrum");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("n_spectrum.json")).unwrap()).unwrap();
    let l1 = json["spectrum"]["clusters"][0]["value"].as_f64().unwrap();
    assert!((l1 + 0.5).abs() < 1e-10, "{l1}");
}
