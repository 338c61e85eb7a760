//! End-to-end acceptance checks. Runs without the libtest harness so that the
//! PASS/FAIL lines appear in plain `cargo test` output.

use std::path::PathBuf;
use std::time::Instant;

use atomkde::formats::summary_csv;
use atomkde::runner;
use atomkde_core::density::{fit_kde_naive, fit_kde_unique};
use atomkde_core::estimators::{estimate, estimate_two, predict_asymptotic_variance};
use atomkde_core::functionals::{
    influence, influence_fd, influence_moments, taylor_residual, Arity, Side,
};
use atomkde_core::sample::{atom_table, partition};
use atomkde_core::simlab::stats::{ks_to_standard_normal, mean, spearman, spearman_p_negative, variance};
use atomkde_core::simlab::{
    child_seed, sample_mixture, ContinuousSpec, DiscreteSpec, ExperimentSpec, MixtureSpec,
    SummaryTable,
};
use atomkde_core::{
    BandwidthRule, BuiltinFunctional, DensityEstimate, EstimatorConfig, Functional,
    KernelSpec, Method, QuadratureConfig, TieRule, UnivariateDensity,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn fig(name: &str) -> ExperimentSpec {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "figs", name].iter().collect();
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn mae(table: &SummaryTable, method: &str, n: usize) -> f64 {
    table
        .rows
        .iter()
        .find(|r| r.method == method && r.n == n)
        .unwrap_or_else(|| panic!("no row for {method} at n = {n}"))
        .mae
}

fn binomial_model() -> MixtureSpec {
    MixtureSpec {
        pi: 0.4,
        continuous: ContinuousSpec::StandardNormal,
        discrete: DiscreteSpec::Binomial { trials: 10, p: 0.5, divisor: 1.0 },
    }
}

fn density_reproduction() -> Outcome {
    let mut spec = fig("density_fig1.json");
    spec.n_grid = vec![10_000];
    spec.reps = 20;
    let start = Instant::now();
    let (table, _) = runner::run(&spec, None).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let (aware, naive) = (mae(&table, "atom_aware", 10_000), mae(&table, "naive", 10_000));
    Outcome {
        pass: aware <= 0.05 && naive >= 0.3 && secs < 60.0,
        detail: format!("n=10000, 20 reps: L1 atom-aware {aware:.4} (<= 0.05), naive {naive:.4} (>= 0.3), {secs:.1} s (< 60 s)"),
    }
}

fn atom_recovery() -> Outcome {
    let n = 10_000;
    let pmf: Vec<f64> = (0..=10u32)
        .map(|k| {
            let c = (0..k).fold(1.0, |acc, j| acc * (10 - j) as f64 / (j + 1) as f64);
            0.4 * c / 1024.0
        })
        .collect();
    let mut good = 0;
    let mut worst_pi: f64 = 0.0;
    let mut worst_mass: f64 = 0.0;
    for rep in 0..100 {
        let s = sample_mixture(&binomial_model(), n, child_seed(42, n, rep)).unwrap();
        let table = atom_table(&partition(&s.data, TieRule::Exact).unwrap(), &s.data).unwrap();
        let mut counts = [0usize; 11];
        let mut stray = false;
        for e in table.entries() {
            let v = e.value[0];
            if v.fract() == 0.0 && (0.0..=10.0).contains(&v) {
                counts[v as usize] = e.count;
            } else {
                stray = true;
            }
        }
        let dev_pi = (table.pi_hat() - 0.4).abs();
        let dev_mass = counts
            .iter()
            .zip(&pmf)
            .map(|(&c, p)| (c as f64 / n as f64 - p).abs())
            .fold(0.0, f64::max);
        worst_pi = worst_pi.max(dev_pi);
        worst_mass = worst_mass.max(dev_mass);
        if dev_pi <= 0.02 && dev_mass <= 0.02 && !stray {
            good += 1;
        }
    }
    Outcome {
        pass: good >= 95,
        detail: format!("{good}/100 reps within tolerance (>= 95); worst |pi_hat - 0.4| {worst_pi:.4}, worst mass error {worst_mass:.4}"),
    }
}

fn miae_rate() -> Outcome {
    let spec = fig("miae_rate.json");
    let (table, _) = runner::run(&spec, None).unwrap();
    let slope = table.slopes.iter().find(|(m, _)| m == "atom_aware").map(|p| p.1).unwrap();
    let maes: Vec<String> = spec.n_grid.iter().map(|&n| format!("{:.4}", mae(&table, "atom_aware", n))).collect();
    Outcome {
        pass: (-0.55..=-0.25).contains(&slope),
        detail: format!("slope {slope:.3} in [-0.55, -0.25]; MIAE over n {:?}: {}", spec.n_grid, maes.join(", ")),
    }
}

fn three_way(spec: &ExperimentSpec) -> Outcome {
    let (table, _) = runner::run(spec, None).unwrap();
    let ns: Vec<f64> = spec.n_grid.iter().map(|&n| n as f64).collect();
    let loo: Vec<f64> = spec.n_grid.iter().map(|&n| mae(&table, "loo", n)).collect();
    let rho = spearman(&ns, &loo);
    let p = spearman_p_negative(&ns, &loo);
    let big = *spec.n_grid.last().unwrap();
    let (a, o, nv) = (mae(&table, "loo", big), mae(&table, "oracle_loo", big), mae(&table, "naive_loo", big));
    let ok_a = rho < 0.0 && p < 0.05;
    let ok_b = a <= 1.5 * o;
    let ok_c = nv >= 2.0 * a;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    Outcome {
        pass: ok_a && ok_b && ok_c,
        detail: format!(
            "(a) loo MAE [{}] rho {rho:.2} p {p:.3} {}; (b) n={big} loo {a:.4} vs 1.5 x oracle {:.4} {}; (c) naive {nv:.4} vs 2 x loo {:.4} {}",
            fmt(&loo),
            if ok_a { "ok" } else { "FAIL" },
            1.5 * o,
            if ok_b { "ok" } else { "FAIL" },
            2.0 * a,
            if ok_c { "ok" } else { "FAIL" },
        ),
    }
}

fn entropy_reproduction() -> Outcome {
    three_way(&fig("entropy_uniform.json"))
}

fn renyi_reproduction() -> Outcome {
    three_way(&fig("renyi075.json"))
}

struct Normal(f64);

impl UnivariateDensity for Normal {
    fn density(&self, x: f64) -> f64 {
        let z = x - self.0;
        (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    fn breakpoints(&self, _: &QuadratureConfig) -> Vec<f64> {
        vec![self.0 - 12.0, self.0 + 12.0]
    }
}

// Deterministic pseudo-random KDE: support points and an evaluation site.
fn random_kde(case: usize, salt: u64, h: f64) -> (DensityEstimate, f64) {
    let spec = MixtureSpec { pi: 0.0, ..binomial_model() };
    let s = sample_mixture(&spec, 8 + case % 13, child_seed(salt, case, 0)).unwrap();
    let pts = s.data.values().to_vec();
    let x = pts[0] + 0.3 * pts[1].tanh();
    (DensityEstimate::new(1, pts, KernelSpec::Gaussian, h).unwrap(), x)
}

fn influence_suite() -> Outcome {
    let start = Instant::now();
    let q = QuadratureConfig::default();
    let functionals = [
        BuiltinFunctional::ShannonEntropy,
        BuiltinFunctional::Quadratic,
        BuiltinFunctional::renyi(0.75).unwrap(),
        BuiltinFunctional::KlDivergence,
        BuiltinFunctional::InnerProduct,
    ];
    let mut worst_fd: f64 = 0.0;
    let mut worst_center: f64 = 0.0;
    for t in &functionals {
        for case in 0..20 {
            let (f, x) = random_kde(case, 11, 0.45);
            let (g, _) = random_kde(case, 23, 0.6);
            let two = t.arity() == Arity::Two;
            let gd: Option<&dyn UnivariateDensity> = two.then_some(&g as &dyn UnivariateDensity);
            let psi = influence(t, x, &f, gd, &q).unwrap();
            let fd = influence_fd(t, x, &f, gd, Side::F, 1e-8, 1e-3, &q).unwrap();
            worst_fd = worst_fd.max((psi.psi_f - fd).abs());
            worst_center = worst_center.max(influence_moments(t, &f, gd, Side::F, &q).unwrap().mean.abs());
            if two {
                let fd_g = influence_fd(t, x, &f, gd, Side::G, 1e-8, 1e-3, &q).unwrap();
                worst_fd = worst_fd.max((psi.psi_g.unwrap() - fd_g).abs());
                worst_center = worst_center.max(influence_moments(t, &f, gd, Side::G, &q).unwrap().mean.abs());
            }
        }
    }

    let entropy = BuiltinFunctional::ShannonEntropy;
    let r1 = taylor_residual(&entropy, &Normal(0.1), &Normal(0.0), &q).unwrap();
    let r2 = taylor_residual(&entropy, &Normal(0.05), &Normal(0.0), &q).unwrap();
    let ratio = r1 / r2;

    // ∫(φ(u − s) − φ(u))² = (1 − exp(−s²/4)) / √π.
    let s: f64 = 0.5;
    let exact = (1.0 - (-s * s / 4.0).exp()) / std::f64::consts::PI.sqrt();
    let quad = taylor_residual(&BuiltinFunctional::Quadratic, &Normal(s), &Normal(0.0), &q).unwrap();
    let quad_err = (quad - exact).abs();

    let secs = start.elapsed().as_secs_f64();
    let pass = worst_fd <= 1e-4 && worst_center <= 1e-6 && (3.5..=4.5).contains(&ratio) && quad_err <= 1e-8 && secs < 30.0;
    Outcome {
        pass,
        detail: format!(
            "max |psi - fd| {worst_fd:.2e} (<= 1e-4, 5 functionals x 20 cases); max |E psi| {worst_center:.2e} (<= 1e-6); entropy Taylor ratio {ratio:.3} (~4); quadratic identity error {quad_err:.1e}; {secs:.1} s (< 30 s)"
        ),
    }
}

fn normality() -> Outcome {
    let n = 4000;
    let model = MixtureSpec {
        pi: 0.4,
        continuous: ContinuousSpec::StandardNormal,
        discrete: DiscreteSpec::Binomial { trials: 10, p: 0.5, divisor: 10.0 },
    };
    let t = BuiltinFunctional::Quadratic;
    let cfg = EstimatorConfig::default().with_method(Method::Ds);
    let truth = 0.5 / std::f64::consts::PI.sqrt();
    let scaled: Vec<f64> = (0..200)
        .map(|rep| {
            let s = sample_mixture(&model, n, child_seed(42, n, rep)).unwrap();
            let r = estimate(&s.data, None, &t, &cfg).unwrap();
            (n as f64).sqrt() * (r.value - truth)
        })
        .collect();
    let predicted = predict_asymptotic_variance(&t, &ContinuousSpec::StandardNormal, 0.4, &QuadratureConfig::default()).unwrap();
    let v = variance(&scaled).unwrap();
    let (m, sd) = (mean(&scaled), v.sqrt());
    let z: Vec<f64> = scaled.iter().map(|s| (s - m) / sd).collect();
    let ks = ks_to_standard_normal(&z);
    let ratio = v / predicted;
    Outcome {
        pass: (0.5..=2.0).contains(&ratio) && ks <= 0.12,
        detail: format!("empirical variance {v:.5} vs predicted {predicted:.5} (ratio {ratio:.3} in [0.5, 2]); KS distance {ks:.3} (<= 0.12)"),
    }
}

fn reduction() -> Outcome {
    let model = MixtureSpec { pi: 0.0, ..binomial_model() };
    let cfg = EstimatorConfig::default();
    let k = KernelSpec::Gaussian;
    let bw = BandwidthRule::Silverman;
    let mut checks = 0usize;
    let mut mismatches = Vec::new();
    for case in 0..100 {
        let n = 10 + 5 * (case % 20);
        let x = sample_mixture(&model, n, child_seed(7, n, case)).unwrap().data;
        let y = sample_mixture(&model, n + 3, child_seed(8, n, case)).unwrap().data;
        assert_eq!(partition(&x, TieRule::Exact).unwrap().unique_indices().len(), n);
        let mut same = |what: &str, a: f64, b: f64| {
            checks += 1;
            if a.to_bits() != b.to_bits() {
                mismatches.push(format!("case {case} {what}: {a} vs {b}"));
            }
        };

        let ua = fit_kde_unique(&x, TieRule::Exact, &k, &bw).unwrap();
        let na = fit_kde_naive(&x, &k, &bw).unwrap();
        for i in 0..50 {
            let u = -4.0 + 0.16 * i as f64;
            same("kde", ua.eval1(u), na.eval1(u));
        }

        let labels = vec![false; n];
        for t in [BuiltinFunctional::ShannonEntropy, BuiltinFunctional::Quadratic] {
            for (aware, naive, oracle) in [
                (Method::Ds, Method::NaiveDs, Method::OracleDs),
                (Method::Loo, Method::NaiveLoo, Method::OracleLoo),
            ] {
                let a = estimate(&x, None, &t, &cfg.with_method(aware)).unwrap().value;
                let b = estimate(&x, None, &t, &cfg.with_method(naive)).unwrap().value;
                let c = estimate(&x, Some(&labels), &t, &cfg.with_method(oracle)).unwrap().value;
                same(&format!("{t} {aware} vs {naive}"), a, b);
                same(&format!("{t} {aware} vs {oracle}"), a, c);
            }
        }
        for t in [BuiltinFunctional::renyi(0.75).unwrap(), BuiltinFunctional::KlDivergence, BuiltinFunctional::InnerProduct] {
            for (aware, naive) in [(Method::Ds, Method::NaiveDs), (Method::Loo, Method::NaiveLoo)] {
                let a = estimate_two(&x, &y, None, None, &t, &cfg.with_method(aware)).unwrap().value;
                let b = estimate_two(&x, &y, None, None, &t, &cfg.with_method(naive)).unwrap().value;
                same(&format!("{t} {aware} vs {naive}"), a, b);
            }
        }
    }
    Outcome {
        pass: mismatches.is_empty(),
        detail: match mismatches.first() {
            None => format!("100 duplicate-free datasets, {checks} comparisons, all bit-identical"),
            Some(m) => format!("{} of {checks} comparisons differ, first: {m}", mismatches.len()),
        },
    }
}

fn determinism() -> Outcome {
    let mut specs = vec![fig("entropy_uniform.json"), fig("renyi075.json"), fig("density_fig1.json")];
    for s in &mut specs {
        s.n_grid = vec![300, 600];
        s.reps = 4;
    }
    let mut differing = Vec::new();
    for spec in &specs {
        let runs: Vec<String> = [Some(1), Some(1), Some(4), None]
            .into_iter()
            .map(|threads| summary_csv(&runner::run(spec, threads).unwrap().0))
            .collect();
        if runs.iter().any(|r| r != &runs[0]) {
            differing.push(spec.name.clone());
        }
    }
    Outcome {
        pass: differing.is_empty(),
        detail: if differing.is_empty() {
            "3 specs x (2 runs on 1 thread, 4 threads, default pool): byte-identical CSV".into()
        } else {
            format!("tables differ for {}", differing.join(", "))
        },
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("density reproduction", density_reproduction),
        ("atom recovery", atom_recovery),
        ("MIAE rate", miae_rate),
        ("entropy three-way comparison", entropy_reproduction),
        ("Renyi-0.75 three-way comparison", renyi_reproduction),
        ("influence-function suite", influence_suite),
        ("asymptotic normality", normality),
        ("reduction to the classical estimators", reduction),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "{} criterion {} ({name}): {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            k + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
