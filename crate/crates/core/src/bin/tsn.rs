use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::de::DeserializeOwned;

use tsn_core::baselines::{baseline_recover, BaselineKind, BaselineSpec};
use tsn_core::bench::{
    load_document, load_model, persist_model, read_rows, run_to_dir, s95_table, train_from_config, ExperimentConfig,
    Method, SummaryRow, TrainScorerConfig, truncate_stages, TsnPreset, TsnSpec, MANIFEST_FILE, SUMMARY_FILE, TRIALS_FILE,
};
use tsn_core::ensembles::{
    gen_matrix, read_matrix_csv, read_vector_csv, rng_from_seed, write_matrix_csv, write_vector_csv, EnsembleKind,
    MatrixEnsemble, SignalDistribution, SnrDb,
};
use tsn_core::linalg::{Scalar, ScalarField};
use tsn_core::ridge::{eta2_for, SblConfig};
use tsn_core::scorers::{eval_scorer, CorrelationScorer};
use tsn_core::treesearch::{epsilon_bar, tsn};
use tsn_core::{Error, Result};

#[derive(Parser)]
#[command(name = "tsn", version, about = "Sparse recovery by scored tree search, with baselines and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a sensing matrix and write it as CSV.
    GenMatrix(GenMatrixArgs),
    /// Train an index scorer from a config file and save it as JSON.
    TrainScorer(TrainArgs),
    /// Top-v support overlap of a saved scorer on fresh instances.
    EvalScorer(EvalArgs),
    /// Recover a sparse vector from a matrix and a measurement.
    Solve(SolveArgs),
    /// Run a Monte-Carlo experiment described by a config file.
    Run(RunArgs),
    /// s_0.95 per algorithm from a summary CSV.
    S95(S95Args),
}

#[derive(Args)]
struct GenMatrixArgs {
    /// gaussian-real, gaussian-complex, partial-dft or correlated-complex.
    #[arg(long)]
    kind: String,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    config: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// The matrix the scorer was trained on.
    #[arg(long)]
    matrix: PathBuf,
    /// Comma-separated sparsities.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    sparsity: Vec<usize>,
    /// Number of top-scored indices kept; defaults to m - 1.
    #[arg(long)]
    v: Option<usize>,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long, default_value = "inf")]
    snr_db: SnrDb,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also evaluate the correlation scorer.
    #[arg(long)]
    baseline: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    measurement: PathBuf,
    /// tsn, omp, gomp, sp, cosamp, iht, mmp-df or sbl.
    #[arg(long, default_value = "tsn")]
    algorithm: String,
    /// Sparsity for baselines, and the k-support size for tsn.
    #[arg(long)]
    sparsity: usize,
    #[arg(long, default_value = "inf")]
    snr_db: SnrDb,
    /// Path to a trained scorer; the correlation scorer is used otherwise.
    #[arg(long)]
    model: Option<PathBuf>,
    /// tau1, tau2 or tau3.
    #[arg(long, default_value = "tau1")]
    preset: String,
    /// Smallest nonzero magnitude per real part, used for the final threshold.
    #[arg(long, default_value_t = 0.1)]
    min_mag: f64,
    /// Wall-clock budget in seconds for tsn.
    #[arg(long)]
    time_budget: Option<f64>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    exact_tol: Option<f64>,
    /// Wall-clock budget in seconds for every tsn algorithm.
    #[arg(long)]
    time_budget: Option<f64>,
}

#[derive(Args)]
struct S95Args {
    summary: PathBuf,
}

fn parse_name<T: DeserializeOwned>(what: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| Error::config(what, format!("unknown value `{value}`")))
}

fn base_dir(path: &Path) -> Option<&Path> {
    path.parent().filter(|p| !p.as_os_str().is_empty())
}

fn gen_matrix_cmd(args: GenMatrixArgs) -> Result<()> {
    let kind: EnsembleKind = parse_name("kind", &args.kind)?;
    let ensemble = MatrixEnsemble::new(kind, args.m, args.n)?;
    let mut rng = rng_from_seed(args.seed);
    match kind.field() {
        ScalarField::Real => write_matrix_csv(&args.out, &gen_matrix::<f64, _>(&ensemble, &mut rng)?),
        ScalarField::Complex => write_matrix_csv(&args.out, &gen_matrix::<Complex64, _>(&ensemble, &mut rng)?),
    }
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let mut config: TrainScorerConfig = load_document(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let model = train_from_config(&config, base_dir(&args.config))?;
    if let Some(record) = model.training() {
        println!("epoch,loss");
        for (i, loss) in record.loss_trace.iter().enumerate() {
            println!("{},{loss}", i + 1);
        }
    }
    persist_model(&model, &args.out)
}

fn eval_typed<T: Scalar>(args: &EvalArgs, phi: DMatrix<T>) -> Result<()> {
    let model = load_model(&args.model)?;
    if model.field() != T::FIELD || model.m() != phi.nrows() || model.n() != phi.ncols() {
        return Err(Error::config(
            "matrix",
            format!("scorer is {}x{}, matrix is {}x{}", model.m(), model.n(), phi.nrows(), phi.ncols()),
        ));
    }
    let v = args.v.unwrap_or(phi.nrows().saturating_sub(1));
    let dist = SignalDistribution::symmetric_for(T::FIELD);
    println!("scorer,sparsity,v,mean_overlap,containment_rate,trials");
    for &s in &args.sparsity {
        let mut rng = rng_from_seed(args.seed.wrapping_add(s as u64));
        let r = eval_scorer(&model, &phi, &dist, s, v, args.trials, args.snr_db, &mut rng)?;
        println!("model,{s},{v},{},{},{}", r.mean_overlap, r.containment_rate, r.trials);
        if args.baseline {
            let mut rng = rng_from_seed(args.seed.wrapping_add(s as u64));
            let r = eval_scorer(&CorrelationScorer, &phi, &dist, s, v, args.trials, args.snr_db, &mut rng)?;
            println!("correlation,{s},{v},{},{},{}", r.mean_overlap, r.containment_rate, r.trials);
        }
    }
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let phi = read_matrix_csv(&args.matrix)?;
    match phi.field() {
        ScalarField::Real => eval_typed(&args, phi.into_typed::<f64>()?),
        ScalarField::Complex => eval_typed(&args, phi.into_typed::<Complex64>()?),
    }
}

fn solve_typed<T: Scalar>(args: &SolveArgs, phi: DMatrix<T>, y: nalgebra::DVector<T>) -> Result<()> {
    let (m, n) = phi.shape();
    let eps = epsilon_bar(&y, args.snr_db);
    let (support, x_hat) = if args.algorithm.eq_ignore_ascii_case("tsn") {
        let preset: TsnPreset = parse_name("preset", &args.preset)?;
        let spec = TsnSpec {
            preset,
            t_max: args.time_budget,
            ..TsnSpec::new(args.sparsity)
        };
        let mut params = spec.params(m, args.sparsity, eps);
        truncate_stages(&mut params, args.sparsity);
        let mut dist = SignalDistribution::symmetric_for(T::FIELD);
        dist.min_mag = args.min_mag;
        let ridge = SblConfig::for_measurement(&y, args.snr_db);
        let out = match &args.model {
            Some(path) => {
                let model = load_model(path)?;
                if model.field() != T::FIELD || model.m() != m || model.n() != n {
                    return Err(Error::config("model", "scorer shape does not match the matrix"));
                }
                tsn(&y, &phi, args.sparsity, &params, &model, ridge, dist.min_magnitude())?
            }
            None => tsn(&y, &phi, args.sparsity, &params, &CorrelationScorer, ridge, dist.min_magnitude())?,
        };
        eprintln!("terminated: {:?}, residual {:e}", out.terminated, out.residual);
        (out.support_estimate, out.signal_estimate)
    } else {
        let kind: BaselineKind = args.algorithm.parse()?;
        let mut spec = BaselineSpec::new(kind, args.sparsity);
        spec.epsilon = Some(eps);
        if kind == BaselineKind::Sbl {
            spec.eta2 = Some(eta2_for(&y, args.snr_db));
        }
        spec.validate(m, n)?;
        let out = baseline_recover(&spec, &y, &phi)?;
        (out.support, out.signal)
    };
    println!("support: {support}");
    write_vector_csv(&args.out, &x_hat)
}

fn solve_cmd(args: SolveArgs) -> Result<()> {
    let phi = read_matrix_csv(&args.matrix)?;
    let y = read_vector_csv(&args.measurement)?;
    if phi.field() == ScalarField::Real && y.field() == ScalarField::Real {
        solve_typed(&args, phi.into_typed::<f64>()?, y.into_typed::<f64>()?)
    } else {
        solve_typed(&args, phi.into_typed::<Complex64>()?, y.into_typed::<Complex64>()?)
    }
}

fn run_cmd(args: RunArgs) -> Result<()> {
    let mut config: ExperimentConfig = load_document(&args.config)?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(w) = args.workers {
        config.workers = Some(w);
    }
    if let Some(tol) = args.exact_tol {
        config.exact_tol = tol;
    }
    if let Some(budget) = args.time_budget {
        for alg in &mut config.algorithms {
            if let Method::Tsn(spec) = &mut alg.method {
                spec.t_max = Some(budget);
            }
        }
    }
    let out = run_to_dir(&config, base_dir(&args.config), &args.out_dir)?;
    println!("algorithm,sparsity,recovery_rate,mean_rel_error,mean_wall_seconds");
    for row in &out.summary {
        println!(
            "{},{},{},{:e},{:e}",
            row.algorithm, row.sparsity, row.recovery_rate, row.mean_rel_error, row.mean_wall_seconds
        );
    }
    eprintln!(
        "wrote {}, {} and {} to {}",
        TRIALS_FILE,
        SUMMARY_FILE,
        MANIFEST_FILE,
        args.out_dir.display()
    );
    Ok(())
}

fn s95_cmd(args: S95Args) -> Result<()> {
    let rows: Vec<SummaryRow> = read_rows(&args.summary)?;
    println!("algorithm,s95");
    for (name, s) in s95_table(&rows)? {
        println!("{name},{s}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenMatrix(a) => gen_matrix_cmd(a),
        Command::TrainScorer(a) => train_cmd(a),
        Command::EvalScorer(a) => eval_cmd(a),
        Command::Solve(a) => solve_cmd(a),
        Command::Run(a) => run_cmd(a),
        Command::S95(a) => s95_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
