use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::Array1;
use neural_chaos::io::fmt_float;
use neural_chaos::nnet::{Activation, NetSpec, TrainConfig};
use neural_chaos::pce::{self, ComparisonRow, Family};
use neural_chaos::problems::{self, Problem, ProblemConfig, ProblemId};
use neural_chaos::rngdist::{Copula, Dist};
use neural_chaos::ssdl::{
    self, default_hyperparameters, fit_continuous, fit_discrete, fit_fixed_cosine, fit_networks,
    ContinuousOptions, DiscreteOptions, FitReport, NetSpecs,
};
use neural_chaos::{Dataset, SpectralModel};

use crate::manifest::{self, companion, Recorder};
use crate::{
    AblateArgs, ActivationArg, Algo, ComparePceArgs, CopulaArg, DiagnoseArgs, DistArg, FitArgs,
    FitOptions, GenerateArgs, MomentsArgs, ReplayArgs, UsageError,
};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_problem(s: &str) -> Result<ProblemId> {
    s.parse::<ProblemId>()
        .map_err(|_| usage(format!("unknown problem `{s}`; valid ids: ex1, ex2, ex3, ex4, ex5")))
}

fn read_config(path: &Path) -> Result<ProblemConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| usage(format!("{}: at `{}`: {}", path.display(), e.path(), e.inner())))
}

fn resolve_problem_config(args: &GenerateArgs) -> Result<ProblemConfig> {
    let mut cfg = match (&args.config, &args.problem) {
        (Some(path), problem) => {
            let cfg = read_config(path)?;
            if let Some(p) = problem {
                if parse_problem(p)? != cfg.id() {
                    bail!(usage(format!("--problem {p} contradicts the {} configuration file", cfg.id())));
                }
            }
            cfg
        }
        (None, Some(p)) => ProblemConfig::default_for(parse_problem(p)?),
        (None, None) => bail!(usage("missing --problem; valid ids: ex1, ex2, ex3, ex4, ex5")),
    };
    let id = cfg.id();
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(g) = args.grid {
        cfg.grid = g;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(f) = args.train_fraction {
        cfg.train_fraction = f;
    }
    if let Some(d) = args.dist {
        let Problem::Ex1 { dist } = &mut cfg.problem else {
            bail!(usage(format!("--dist applies to ex1 only, not {id}")));
        };
        *dist = match d {
            DistArg::Uniform => Dist::Uniform { a: 0.0, b: 1.0 },
            DistArg::Normal => Dist::Normal { mu: 0.0, sigma: 1.0 },
            DistArg::Gamma => Dist::Gamma { k: 1.0, theta: 1.0 },
            DistArg::Poisson => Dist::Poisson { lambda: 1.0 },
        };
    }
    let copula_flags = args.copula.is_some() || args.tau.is_some() || args.rho.is_some() || args.sigma.is_some();
    if copula_flags {
        let Problem::Ex5 { copula, .. } = &mut cfg.problem else {
            bail!(usage(format!("copula flags apply to ex5 only, not {id}")));
        };
        let kind = args.copula.unwrap_or(match copula {
            Copula::Gaussian { .. } => CopulaArg::Gaussian,
            Copula::Gumbel { .. } => CopulaArg::Gumbel,
        });
        *copula = match (kind, *copula) {
            (CopulaArg::Gaussian, current) => {
                if args.tau.is_some() {
                    bail!(usage("--tau applies to the gumbel copula"));
                }
                let (rho0, sigma0) = match current {
                    Copula::Gaussian { rho, sigma } => (rho, sigma),
                    Copula::Gumbel { .. } => (-0.5, 0.25),
                };
                Copula::Gaussian {
                    rho: args.rho.unwrap_or(rho0),
                    sigma: args.sigma.unwrap_or(sigma0),
                }
            }
            (CopulaArg::Gumbel, current) => {
                if args.rho.is_some() || args.sigma.is_some() {
                    bail!(usage("--rho and --sigma apply to the gaussian copula"));
                }
                let theta0 = match current {
                    Copula::Gumbel { theta } => theta,
                    Copula::Gaussian { .. } => 2.0,
                };
                Copula::Gumbel {
                    theta: args.tau.unwrap_or(theta0),
                }
            }
        };
    }
    if let Some(k) = args.kl_dims {
        match &mut cfg.problem {
            Problem::Ex3(p) => p.kl_dims = k,
            Problem::Ex4(p) => p.kl_dims = k,
            _ => bail!(usage(format!("--kl-dims applies to ex3 and ex4, not {id}"))),
        }
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

pub fn generate(args: GenerateArgs, argv: Vec<String>) -> Result<()> {
    let cfg = resolve_problem_config(&args)?;
    let mut rec = Recorder::new("generate", argv);
    if let Some(path) = &args.config {
        rec.input(path)?;
    }
    rec.config = serde_json::to_value(&cfg)?;
    rec.seeds.insert("problem".into(), cfg.seed);
    log::info!("generating {} realizations of {}", cfg.n, cfg.id());
    let ds = problems::generate(&cfg)?;
    ds.save(&args.out)?;
    rec.output(&args.out);
    rec.finish(&companion(&args.out, "manifest.json"))?;
    eprintln!(
        "wrote {} (N = {}, M = {}, d_xi = {})",
        args.out.display(),
        ds.n(),
        ds.m(),
        ds.dim_xi()
    );
    Ok(())
}

fn load_dataset(path: &Path, rec: &mut Recorder) -> Result<Dataset> {
    rec.input(path)?;
    Dataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn load_model(path: &Path, rec: &mut Recorder) -> Result<SpectralModel> {
    rec.input(path)?;
    SpectralModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

/// Network architectures and training settings after applying overrides.
fn resolve_networks(ds: &Dataset, opts: &FitOptions) -> Result<(NetSpecs, TrainConfig)> {
    let id = match &opts.problem {
        Some(p) => parse_problem(p)?,
        None => ds.meta.problem.parse::<ProblemId>().unwrap_or_else(|_| {
            log::warn!("dataset problem `{}` has no default hyperparameters; using ex1's", ds.meta.problem);
            ProblemId::Ex1
        }),
    };
    let (mut specs, mut train) = default_hyperparameters(id, ds.dim_x(), ds.dim_xi());
    let adjust = |spec: &mut NetSpec| {
        if let Some(h) = &opts.hidden {
            spec.hidden = h.clone();
        }
        if let Some(a) = opts.activation {
            spec.activation = match a {
                ActivationArg::Elu => Activation::Elu,
                ActivationArg::Relu => Activation::Relu,
                ActivationArg::Sine => Activation::Sine,
            };
            if spec.activation != Activation::Sine {
                spec.omega0 = None;
            }
        }
        if opts.omega0.is_some() {
            spec.omega0 = opts.omega0;
        }
    };
    adjust(&mut specs.phi0);
    adjust(&mut specs.phi);
    adjust(&mut specs.psi);
    for spec in [&specs.phi0, &specs.phi, &specs.psi] {
        spec.validate().map_err(|e| usage(e.to_string()))?;
    }
    if let Some(lr) = opts.lr {
        train.learning_rate = lr;
    }
    if let Some(e) = opts.epochs {
        train.max_epochs = e;
    }
    if let Some(t) = opts.threshold {
        train.loss_threshold = t;
    }
    train.validate().map_err(|e| usage(e.to_string()))?;
    Ok((specs, train))
}

fn run_fit(ds: &Dataset, opts: &FitOptions) -> Result<(SpectralModel, FitReport, serde_json::Value)> {
    if !(opts.tol >= 0.0) || opts.max_terms == 0 {
        bail!(usage("--tol must be non-negative and --max-terms positive"));
    }
    let seed = opts.seed.unwrap_or(ds.meta.seed);
    let discrete = DiscreteOptions {
        tol: opts.tol,
        max_terms: opts.max_terms,
        ..DiscreteOptions::default()
    };
    let (model, mut report, resolved) = match opts.algo {
        Algo::Discrete => {
            let (m, r) = fit_discrete(ds, &discrete)?;
            (m, r, serde_json::json!({ "discrete": discrete_json(&discrete) }))
        }
        Algo::DiscreteContinuous => {
            let (specs, train) = resolve_networks(ds, opts)?;
            let (m, r) = fit_discrete(ds, &discrete)?;
            let (m, mut r2) = fit_networks(&m, ds, &specs, &train, seed)?;
            r2.stage_seconds.extend(r.stage_seconds);
            (
                m,
                r2,
                serde_json::json!({
                    "discrete": discrete_json(&discrete),
                    "networks": specs,
                    "train": train,
                    "seed": seed,
                }),
            )
        }
        Algo::Continuous => {
            let (specs, train) = resolve_networks(ds, opts)?;
            let mut copts = ContinuousOptions::new(specs, train, seed);
            copts.tol = opts.tol;
            copts.max_terms = opts.max_terms;
            copts.patience = opts.patience;
            let (m, r) = fit_continuous(ds, &copts)?;
            (m, r, serde_json::to_value(&copts)?)
        }
        Algo::FixedCosine => {
            let terms = opts.terms.unwrap_or_else(|| ssdl::cosine_term_limit(ds.m()));
            let (m, r) = fit_fixed_cosine(ds, terms)?;
            (m, r, serde_json::json!({ "terms": terms }))
        }
    };
    if report.train_mse.is_none() {
        report.train_mse = report.residual_mse.last().copied();
    }
    Ok((model, report, resolved))
}

fn discrete_json(d: &DiscreteOptions) -> serde_json::Value {
    serde_json::json!({
        "tol": d.tol,
        "max_terms": d.max_terms,
        "cmd_tol": d.cmd_tol,
        "cmd_max_iter": d.cmd_max_iter,
    })
}

pub fn fit(args: FitArgs, argv: Vec<String>) -> Result<()> {
    let mut rec = Recorder::new("fit", argv);
    let ds = load_dataset(&args.dataset, &mut rec)?;
    let (model, report, resolved) = run_fit(&ds, &args.fit)?;
    rec.config = serde_json::json!({ "options": args.fit, "resolved": resolved });
    rec.seeds.insert("dataset".into(), ds.meta.seed);
    if let Some(s) = model.provenance.seed {
        rec.seeds.insert("fit".into(), s);
    }
    model.save(&args.out)?;
    rec.output(&args.out);
    rec.write(&companion(&args.out, "residuals.csv"), &report.residual_csv())?;
    rec.write(&companion(&args.out, "errors.csv"), &report.error_csv())?;
    // timings make the report run-dependent; it is not a tracked output
    std::fs::write(
        companion(&args.out, "report.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    rec.finish(&companion(&args.out, "manifest.json"))?;
    eprintln!("{} terms, residual MSE {:?}", model.n_terms(), report.residual_mse.last());
    for n in &report.networks {
        eprintln!("  {:>6}: loss {:.3e}, mse {:.3e}, {} epochs", n.role, n.loss, n.mse, n.epochs);
    }
    Ok(())
}

fn config_for_moments(args: &MomentsArgs, rec: &mut Recorder) -> Result<ProblemConfig> {
    if let Some(path) = &args.config {
        rec.input(path)?;
        return read_config(path);
    }
    let path = args.dataset.as_ref().expect("clap requires --dataset or --config");
    let ds = load_dataset(path, rec)?;
    ds.meta
        .config
        .clone()
        .ok_or_else(|| usage(format!("{} carries no problem configuration; pass --config", path.display())))
}

fn coordinate_header(dim: usize) -> Vec<String> {
    if dim == 1 {
        vec!["x".into()]
    } else {
        (1..=dim).map(|k| format!("x{k}")).collect()
    }
}

pub fn moments(args: MomentsArgs, argv: Vec<String>) -> Result<()> {
    let mut rec = Recorder::new("moments", argv);
    let model = load_model(&args.model, &mut rec)?;
    let cfg = config_for_moments(&args, &mut rec)?;
    let grid = cfg.grid_points();
    let support = &model.support.grid;
    if grid.dim() != support.dim()
        || grid.iter().zip(support.iter()).any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs()))
    {
        bail!("the model grid does not match the {} configuration grid", cfg.id());
    }
    let mean = ssdl::mean_field(&model);
    let std = ssdl::variance_field(&model)?.mapv(f64::sqrt);
    let mc_n = args.mc_n.unwrap_or(if cfg.id() == ProblemId::Ex4 { 10_000 } else { 100_000 });
    let mc_seed = args.mc_seed.unwrap_or(cfg.seed ^ 0x6d63_5f73_6565_6421);
    let mc = if mc_n > 0 {
        log::info!("running {mc_n} Monte Carlo solves");
        Some(problems::mc_moments(&cfg, mc_n, mc_seed)?)
    } else {
        None
    };
    rec.config = serde_json::json!({ "problem": cfg, "mc_n": mc_n, "mc_seed": mc_seed });
    rec.seeds.insert("problem".into(), cfg.seed);
    rec.seeds.insert("mc".into(), mc_seed);

    let mut header = coordinate_header(grid.ncols());
    header.extend(["mean_model", "std_model", "mean_mc", "std_mc"].map(String::from));
    let mut out = header.join(",") + "\n";
    for j in 0..grid.nrows() {
        let coords: Vec<String> = grid.row(j).iter().map(|v| fmt_float(*v)).collect();
        let (mm, sm) = match &mc {
            Some(m) => (fmt_float(m.mean[j]), fmt_float(m.std[j])),
            None => (String::new(), String::new()),
        };
        writeln!(out, "{},{},{},{mm},{sm}", coords.join(","), fmt_float(mean[j]), fmt_float(std[j]))?;
    }
    rec.write(&args.out, &out)?;
    rec.finish(&companion(&args.out, "manifest.json"))?;
    if let Some(m) = &mc {
        let rel = |a: &Array1<f64>, b: &Array1<f64>| {
            let scale = b.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            a.iter().zip(b).fold(0.0f64, |s, (x, y)| s.max((x - y).abs())) / scale.max(f64::MIN_POSITIVE)
        };
        eprintln!(
            "max relative deviation from Monte Carlo: mean {:.3e}, std {:.3e}",
            rel(&mean, &m.mean),
            rel(&std, &m.std)
        );
    }
    Ok(())
}

fn first_rows(rows: &[usize], cap: Option<usize>) -> Vec<usize> {
    rows[..cap.map_or(rows.len(), |c| c.min(rows.len()))].to_vec()
}

pub fn compare_pce(args: ComparePceArgs, argv: Vec<String>) -> Result<()> {
    if args.min_degree > args.max_degree {
        bail!(usage("--min-degree exceeds --max-degree"));
    }
    let mut rec = Recorder::new("compare-pce", argv);
    let mut ds = load_dataset(&args.dataset, &mut rec)?;
    let cfg = ds.meta.config.clone().ok_or_else(|| {
        usage(format!("{} carries no problem configuration", args.dataset.display()))
    })?;
    let families = pce::input_families(&cfg).map_err(|e| usage(e.to_string()))?;
    ds.split.train = first_rows(&ds.split.train, args.max_rows);
    ds.split.test = first_rows(&ds.split.test, args.max_rows);
    let mut rows = pce::compare_degrees(&ds, &families, args.min_degree..=args.max_degree)?;

    let model = match &args.model {
        Some(path) => {
            let m = load_model(path, &mut rec)?;
            m.check_dataset(&ds)?;
            Some(m)
        }
        None => None,
    };
    if let Some(m) = &model {
        let (train, test) = if m.has_networks() {
            let (train, test) = ssdl::network_errors(m, &ds)?;
            (train, test)
        } else {
            let full = Dataset::load(&args.dataset)?;
            let rec_train = m.reconstruct(&full, m.n_terms())?;
            let err = (&rec_train - &full.train_values()).mapv(|v| v * v);
            (err.mean().unwrap_or(0.0), None)
        };
        rows.push(ComparisonRow {
            degree: "neural-chaos".into(),
            basis_count: Some(m.n_terms() as u64 + 1),
            train_mse: Some(train),
            test_mse: test,
        });
    }
    rec.config = serde_json::json!({
        "families": families,
        "dimension": ds.dim_x() + families.len(),
        "min_degree": args.min_degree,
        "max_degree": args.max_degree,
        "max_rows": args.max_rows,
    });
    rec.seeds.insert("dataset".into(), ds.meta.seed);
    rec.write(&args.out, &pce::comparison_csv(&rows))?;

    if let (Some(m), Some(p)) = (&model, args.legendre_term) {
        let csv = legendre_table(m, &families, p, &args.legendre_sizes)?;
        rec.write(&companion(&args.out, "legendre.csv"), &csv)?;
    }
    rec.finish(&companion(&args.out, "manifest.json"))?;
    Ok(())
}

/// `basis,terms,mse` rows: 1-D Legendre fits of `ψ_p` on the support samples
/// and, when present, the stochastic network's fit.
fn legendre_table(model: &SpectralModel, families: &[Family], p: usize, sizes: &[usize]) -> Result<String> {
    if p == 0 || p > model.n_terms() {
        bail!(usage(format!("--legendre-term {p} outside 1..={}", model.n_terms())));
    }
    if model.support.xi.ncols() != 1 {
        bail!(usage("Legendre fits of ψ need a single random input"));
    }
    let xi = model.support.xi.column(0);
    let (a, b) = match families.first() {
        Some(Family::Legendre { a, b }) => (*a, *b),
        _ => (
            xi.iter().copied().fold(f64::INFINITY, f64::min),
            xi.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ),
    };
    let term = &model.terms[p - 1];
    let mut out = String::from("basis,terms,mse\n");
    for &k in sizes {
        let (_, mse) = pce::legendre_fit_1d(xi, term.psi_discrete.view(), k, a, b)?;
        writeln!(out, "legendre,{k},{}", fmt_float(mse))?;
    }
    if let Some(net) = &term.psi_net {
        let pred = net.forward(model.support.xi.view())?;
        let mse = (&pred - &term.psi_discrete).mapv(|v| v * v).mean().unwrap_or(0.0);
        writeln!(out, "network,,{}", fmt_float(mse))?;
    }
    Ok(out)
}

pub fn diagnose(args: DiagnoseArgs, argv: Vec<String>) -> Result<()> {
    let mut rec = Recorder::new("diagnose", argv);
    let model = load_model(&args.model, &mut rec)?;
    let ds = load_dataset(&args.dataset, &mut rec)?;
    model.check_dataset(&ds)?;
    let test_xi = ds.test_xi();
    let xi = (!ds.split.test.is_empty()).then(|| test_xi.view());
    let report = ssdl::diagnostics(&model, xi)?;
    rec.config = serde_json::json!({ "network_samples": if xi.is_some() { "test" } else { "support" } });
    rec.write(&args.out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    rec.finish(&companion(&args.out, "manifest.json"))?;
    eprintln!(
        "orthonormality (discrete) {:.3e}, variance identity drift {:.3e}",
        report.orthonormality_discrete, report.variance_identity_drift
    );
    Ok(())
}

pub fn ablate_datasize(args: AblateArgs, argv: Vec<String>) -> Result<()> {
    let mut rec = Recorder::new("ablate-datasize", argv);
    let ds = load_dataset(&args.dataset, &mut rec)?;
    let mut out = String::from("n_train,terms,train_mse,test_mse\n");
    let mut resolved = Vec::new();
    for &n in &args.sizes {
        let sub = ds.truncate_train(n).map_err(|e| usage(e.to_string()))?;
        log::info!("fitting with {n} training rows");
        let (model, report, r) = run_fit(&sub, &args.fit)?;
        let test = if model.has_networks() {
            ssdl::network_errors(&model, &sub)?.1
        } else {
            None
        };
        let cell = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
        writeln!(out, "{n},{},{},{}", model.n_terms(), cell(report.train_mse), cell(test))?;
        resolved.push(r);
    }
    rec.config = serde_json::json!({ "sizes": args.sizes, "options": args.fit, "resolved": resolved });
    rec.seeds.insert("dataset".into(), ds.meta.seed);
    rec.write(&args.out, &out)?;
    rec.finish(&companion(&args.out, "manifest.json"))?;
    Ok(())
}

pub fn replay(args: ReplayArgs, run: fn(Vec<String>) -> Result<()>) -> Result<()> {
    let recorded = manifest::read(&args.manifest)?;
    if recorded.args.iter().any(|a| a == "replay") {
        bail!(usage("a replay manifest cannot be replayed"));
    }
    run(recorded.args.clone())?;
    let mut mismatched = Vec::new();
    for out in &recorded.outputs {
        let now = manifest::FileDigest::of(&out.path)?;
        if now.sha256 != out.sha256 {
            mismatched.push(out.path.display().to_string());
        }
    }
    if !mismatched.is_empty() {
        bail!("outputs differ from the manifest: {}", mismatched.join(", "));
    }
    eprintln!("reproduced {} outputs", recorded.outputs.len());
    Ok(())
}
