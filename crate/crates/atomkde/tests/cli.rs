use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use atomkde_core::simlab::{sample_mixture, ContinuousSpec, DiscreteSpec, MixtureSpec};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_atomkde"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fig(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "figs", name].iter().collect();
    p.to_str().unwrap().to_owned()
}

fn write(dir: &Path, name: &str, contents: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, contents).unwrap();
    p.to_str().unwrap().to_owned()
}

fn mixture_csv(dir: &Path, name: &str, spec: &MixtureSpec, n: usize, seed: u64) -> (String, String) {
    let s = sample_mixture(spec, n, seed).unwrap();
    let d = s.data.dim();
    let mut body = String::new();
    for i in 0..s.data.len() {
        let row: Vec<String> = s.data.point(i).iter().map(|v| v.to_string()).collect();
        body.push_str(&row.join(","));
        body.push('\n');
    }
    let header = (1..=d).map(|k| format!("x{k}")).collect::<Vec<_>>().join(",");
    let labels: String = s.labels.iter().map(|&l| if l { "1\n" } else { "0\n" }).collect();
    (
        write(dir, name, &format!("{header}\n{body}")),
        write(dir, &format!("{name}.labels"), &labels),
    )
}

fn poisson_model(continuous: ContinuousSpec) -> MixtureSpec {
    MixtureSpec {
        pi: 0.4,
        continuous,
        discrete: DiscreteSpec::ScaledPoisson { lambda: 1.0, divisor: 5.0 },
    }
}

#[test]
fn partition_reports_the_atom() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "a.csv", "1.0\n2.5\n1.0\n3.7\n");
    let o = run(&["partition", "--input", &input]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["n"], 4);
    assert_eq!(v["pi_hat"], 0.5);
    assert_eq!(v["atoms"].as_array().unwrap().len(), 1);
    assert_eq!(v["atoms"][0]["value"][0], 1.0);
}

#[test]
fn partition_of_an_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "e.csv", "");
    let out = dir.path().join("p.json");
    let o = run(&["partition", "--input", &input, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["n"], 0);
    assert!(stdout(&o).contains("n=0"));
}

#[test]
fn malformed_row_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "bad.csv", "1.0\n2.0\n3,x\n");
    let o = run(&["partition", "--input", &input]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("row 3"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&["estimate", "--functional", "nope", "--input", "x.csv"]).status.code(), Some(2));
    assert_eq!(run(&["fit-density", "--input", "x.csv", "--grid", "1:0:5"]).status.code(), Some(2));
    assert_eq!(run(&["partition"]).status.code(), Some(2));
}

#[test]
fn naive_grid_equals_atom_aware_grid_without_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "d.csv", "x\n-0.7\n0.2\n0.31\n1.4\n2.2\n");
    let grid = |naive: bool| {
        let out = dir.path().join(if naive { "n.csv" } else { "a.csv" });
        let mut args = vec!["fit-density", "--input", &input, "--grid", "-2:3:41", "--out", out.to_str().unwrap()];
        if naive {
            args.push("--naive");
        }
        let o = run(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out).unwrap()
    };
    let (a, b) = (grid(false), grid(true));
    assert_eq!(a, b);
    assert!(String::from_utf8(a).unwrap().starts_with("x1,density\n"));
}

#[test]
fn fit_density_separates_the_atom_at_five() {
    let dir = tempfile::tempdir().unwrap();
    let model = MixtureSpec {
        pi: 0.4,
        continuous: ContinuousSpec::StandardNormal,
        discrete: DiscreteSpec::Binomial { trials: 10, p: 0.5, divisor: 1.0 },
    };
    let (input, _) = mixture_csv(dir.path(), "m.csv", &model, 10_000, 3);
    let at_five = |naive: bool| {
        let mut args = vec!["fit-density", "--input", &input, "--grid", "4:6:3"];
        if naive {
            args.push("--naive");
        }
        let o = run(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        let row = stdout(&o).lines().nth(2).unwrap().to_owned();
        let (x, v) = row.split_once(',').unwrap();
        assert_eq!(x, "5");
        v.parse::<f64>().unwrap()
    };
    let (aware, naive) = (at_five(false), at_five(true));
    // φ(5) ≈ 1.49e-6; the naive estimate carries the spike of the atom at 5.
    assert!(aware < 1e-3, "{aware}");
    assert!(naive > 0.1, "{naive}");

    let atoms = dir.path().join("atoms.csv");
    let o = run(&["fit-density", "--input", &input, "--grid", "-5:5:11", "--atoms", atoms.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(atoms).unwrap();
    assert!(text.starts_with("x1,count,mass,combined_mass\n"));
    assert!(text.lines().skip(1).all(|l| l.split(',').next().unwrap().parse::<f64>().unwrap().fract() == 0.0));
}

#[test]
fn bivariate_grid_has_two_coordinates() {
    let dir = tempfile::tempdir().unwrap();
    let model = MixtureSpec {
        pi: 0.4,
        continuous: ContinuousSpec::BivariateStandardNormal,
        discrete: DiscreteSpec::PoissonOnAxis { lambda: 1.0 },
    };
    let (input, _) = mixture_csv(dir.path(), "b.csv", &model, 500, 4);
    let o = run(&["fit-density", "--input", &input, "--grid", "-3:3:5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("x1,x2,density\n"));
    assert_eq!(text.lines().count(), 26);
}

#[test]
fn entropy_estimate_on_the_poisson_model() {
    let dir = tempfile::tempdir().unwrap();
    let (input, labels) = mixture_csv(dir.path(), "u.csv", &poisson_model(ContinuousSpec::Uniform01), 5000, 5);
    let o = run(&["estimate", "--functional", "entropy", "--method", "loo", "--input", &input]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert!(v["value"].as_f64().unwrap().is_finite());
    assert!(v["warnings"].as_array().unwrap().is_empty(), "{v}");

    let o = run(&["estimate", "--functional", "entropy", "--method", "oracle-loo", "--input", &input]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("labels"), "{}", stderr(&o));

    let o = run(&["estimate", "--functional", "entropy", "--method", "oracle-loo", "--input", &input, "--labels", &labels]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["method"], "oracle_loo");
}

#[test]
fn two_sample_report_has_both_samples() {
    let dir = tempfile::tempdir().unwrap();
    let (x, _) = mixture_csv(dir.path(), "x.csv", &poisson_model(ContinuousSpec::Uniform01), 600, 6);
    let poly = ContinuousSpec::Poly { c0: 0.5, c1: 5.0, k: 9.0 };
    let (y, _) = mixture_csv(dir.path(), "y.csv", &poisson_model(poly), 600, 7);
    let o = run(&["estimate", "--functional", "renyi:0.75", "--method", "loo", "--input", &x, "--input2", &y]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["pi_hat"].as_f64().unwrap() > 0.2);
    assert!(v["pi_hat2"].as_f64().unwrap() > 0.2);
    assert_eq!(v["m"], 600);

    let o = run(&["estimate", "--functional", "renyi:0.75", "--input", &x]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn strict_mode_fails_on_floored_densities() {
    let dir = tempfile::tempdir().unwrap();
    let body: String = (0..100).map(|i| format!("{i}\n")).collect();
    let input = write(dir.path(), "s.csv", &body);
    let args = ["estimate", "--functional", "entropy", "--input", &input, "--bandwidth", "fixed:0.01"];
    let o = run(&args);
    assert!(o.status.success());
    assert!(stderr(&o).contains("warning"));
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(run(&strict).status.code(), Some(4));
}

#[test]
fn experiment_tables_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = fig("entropy_uniform.json");
    let table = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = run(&["experiment", &spec, "--reps", "3", "--seed", "42", "--threads", threads, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out).unwrap()
    };
    let a = table("a.csv", "1");
    assert_eq!(a, table("b.csv", "1"));
    assert_eq!(a, table("c.csv", "2"));
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("method,n,mae,sd,reps\n"));
    assert_eq!(text.lines().count(), 1 + 3 * 4);

    let sidecar: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.json")).unwrap()).unwrap();
    assert_eq!(sidecar["schema_version"], 1);
    assert_eq!(sidecar["spec"]["seed"], 42);
    for m in ["loo", "naive_loo", "oracle_loo"] {
        assert!(sidecar["slopes"][m].is_number(), "{sidecar}");
    }
}

#[test]
fn renyi_spec_lists_the_three_methods() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec: Value = serde_json::from_str(&std::fs::read_to_string(fig("renyi075.json")).unwrap()).unwrap();
    spec["n_grid"] = serde_json::json!([200, 400]);
    let path = write(dir.path(), "r.json", &spec.to_string());
    let o = run(&["experiment", &path, "--reps", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let methods: Vec<String> = stdout(&o).lines().skip(1).map(|l| l.split(',').next().unwrap().to_owned()).collect();
    for m in ["loo", "naive_loo", "oracle_loo"] {
        assert!(methods.iter().any(|x| x == m), "{methods:?}");
    }
}

#[test]
fn shipped_specs_parse() {
    for name in ["density_fig1.json", "density_fig3.json", "miae_rate.json", "entropy_uniform.json", "entropy_poly.json", "renyi075.json"] {
        let text = std::fs::read_to_string(fig(name)).unwrap();
        let spec: atomkde_core::simlab::ExperimentSpec = serde_json::from_str(&text).unwrap();
        spec.validate().unwrap();
    }
}
