use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use skullface::coupled::{fit_sstl, fit_ustl, DomainBatch, SupervisionConfig};
use skullface::dataset::{
    load_images, load_manifest, plan_folds, synth_extended_gallery, synth_paired_with,
    validate_records, write_corpus, AugmentationSpec, Corpus, Modality, Protocol, SynthStyle,
};
use skullface::dictbase::fit_dictionary;
use skullface::eval::{emit_report, load_report, run_protocol, DlConfig, Fusion, MethodKind, RunConfig};
use skullface::features::{batch_extract, FeatureConfig, FeatureKind};
use skullface::reduce::Pca;
use skullface::{xfml, Error, FeatureMatrix, Result, TransformParams};

#[derive(Parser)]
#[command(name = "skullface", version, about = "Skull-to-face identification with learned sparsifying transforms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic paired corpus (PNG images and manifest.json).
    Synth(SynthArgs),
    /// Print the five-fold plan of a manifest as JSON.
    Folds(FoldsArgs),
    /// Extract a feature matrix (one column per manifest record).
    Extract(ExtractArgs),
    /// Fit a model on every labeled pair and unlabeled record of a manifest.
    Train(TrainArgs),
    /// Run the five-fold protocol and write one report per method.
    Eval(EvalArgs),
    /// Summarize results.json files.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    subjects: usize,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Extra unlabeled faces flagged for the extended gallery.
    #[arg(long, default_value_t = 0)]
    distractors: usize,
    /// Use the face image as its own skull.
    #[arg(long)]
    identical: bool,
}

#[derive(Args)]
struct FoldsArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "P1")]
    protocol: Protocol,
    /// Write the plan here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "hog")]
    features: FeatureKind,
    /// Project onto this many principal components of the extracted columns.
    #[arg(long)]
    pca: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TransformOpts {
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 32)]
    tau: usize,
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Ridge weight of the alignment map.
    #[arg(long, default_value_t = 3.0)]
    rho: f64,
    #[arg(long, default_value_t = 20)]
    sup_iters: usize,
}

impl TransformOpts {
    fn params(&self, seed: u64) -> TransformParams {
        TransformParams {
            lambda: self.lambda,
            epsilon: self.epsilon,
            tau: self.tau,
            max_iters: self.max_iters,
            seed,
            ..TransformParams::default()
        }
    }

    fn supervision(&self) -> SupervisionConfig {
        SupervisionConfig {
            gamma: self.gamma,
            rho: Some(self.rho),
            sup_iters: self.sup_iters,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum TrainMethod {
    Ustl,
    Sstl,
    Dl,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Feature matrix written by `extract` for the same manifest.
    #[arg(long)]
    features: PathBuf,
    #[arg(long, value_enum)]
    method: TrainMethod,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    transform: TransformOpts,
    #[arg(long, default_value_t = 256)]
    dl_atoms: usize,
    #[arg(long, default_value_t = 10)]
    dl_sparsity: usize,
    #[arg(long, default_value_t = 30)]
    dl_iters: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "P1")]
    protocol: Protocol,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated method names, or `all`.
    #[arg(long, default_value = "all")]
    methods: String,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    transform: TransformOpts,
    #[arg(long, default_value_t = 64)]
    pca: usize,
    #[arg(long)]
    no_register: bool,
    #[arg(long, default_value_t = 5)]
    max_shift: u32,
    /// Disable gallery and training-pair augmentation.
    #[arg(long)]
    no_augment: bool,
    /// Rank every gallery copy separately instead of fusing per identity.
    #[arg(long)]
    no_fusion: bool,
    #[arg(long)]
    standardize: bool,
    #[arg(long, default_value_t = 256)]
    dl_atoms: usize,
    #[arg(long, default_value_t = 10)]
    dl_sparsity: usize,
    #[arg(long, default_value_t = 30)]
    dl_iters: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// results.json files or directories written by `eval`.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
}

fn synth(args: &SynthArgs) -> Result<()> {
    let style = if args.identical { SynthStyle::Identical } else { SynthStyle::Degraded };
    let mut corpus = synth_paired_with(args.subjects, args.noise, args.seed, style)?;
    if args.distractors > 0 {
        corpus.extend(synth_extended_gallery(args.distractors, args.noise, args.seed.wrapping_add(1))?);
    }
    let manifest = write_corpus(&corpus, &args.out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn folds(args: &FoldsArgs) -> Result<()> {
    let records = load_manifest(&args.manifest)?;
    let plan = plan_folds(&records, args.protocol, args.seed)?;
    plan.check_no_leakage(&records)?;
    let json = plan.to_json() + "\n";
    match &args.out {
        Some(path) => std::fs::write(path, json).map_err(|e| Error::io(path, e)),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn extract(args: &ExtractArgs) -> Result<()> {
    let records = load_manifest(&args.manifest)?;
    let images = load_images(&records)?;
    let mut x = batch_extract(&images, &FeatureConfig::new(args.features))?;
    if let Some(m) = args.pca {
        x = Pca::fit(&x, m)?.apply(&x)?;
    }
    xfml::write_file(&args.out, &xfml::matrix_to_bytes(x.as_matrix())?)?;
    println!("{} x {} features -> {}", x.dim(), x.n_samples(), args.out.display());
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let records = load_manifest(&args.manifest)?;
    let x = FeatureMatrix::new(xfml::matrix_from_bytes(&xfml::read_file(&args.features)?)?)?;
    if x.n_samples() != records.len() {
        return Err(Error::data(format!(
            "{} feature columns for {} manifest records",
            x.n_samples(),
            records.len()
        )));
    }
    let pairs = validate_records(&records)?;
    let unlabeled = |face: bool| {
        records
            .iter()
            .enumerate()
            .filter(move |(_, r)| !r.labeled && !r.is_extended() && (r.modality == Modality::Face) == face)
            .map(|(i, _)| i)
    };
    let faces_idx: Vec<usize> = pairs.iter().map(|p| p.face).chain(unlabeled(true)).collect();
    let skulls_idx: Vec<usize> = pairs.iter().map(|p| p.skull).chain(unlabeled(false)).collect();
    let faces = x.select_columns(&faces_idx)?;
    let skulls = x.select_columns(&skulls_idx)?;

    let bytes = match args.method {
        TrainMethod::Ustl => xfml::coupled_to_bytes(&fit_ustl(&faces, &skulls, &args.transform.params(args.seed))?)?,
        TrainMethod::Sstl => {
            let n = pairs.len();
            let idx: Vec<usize> = (0..n).collect();
            let labeled = DomainBatch::paired(faces.select_columns(&idx)?, skulls.select_columns(&idx)?)?;
            let model = fit_sstl(
                &DomainBatch::unpaired(faces, skulls),
                &labeled,
                &args.transform.params(args.seed),
                &args.transform.supervision(),
            )?;
            xfml::coupled_to_bytes(&model)?
        }
        TrainMethod::Dl => {
            let dict = fit_dictionary(&faces, args.dl_atoms, args.dl_sparsity, args.dl_iters, args.seed)?;
            xfml::dictionary_to_bytes(&dict)?
        }
    };
    xfml::write_file(&args.out, &bytes)?;
    println!("{}", args.out.display());
    Ok(())
}

fn parse_methods(list: &str) -> Result<Vec<MethodKind>> {
    if list == "all" {
        return Ok(MethodKind::ALL.to_vec());
    }
    list.split(',').map(|m| m.trim().parse()).collect()
}

fn eval(args: &EvalArgs) -> Result<()> {
    let methods = parse_methods(&args.methods)?;
    let corpus = Corpus::load(&args.manifest)?;
    let mut config = RunConfig::new(args.protocol, args.seed);
    config.register = !args.no_register;
    config.max_shift = args.max_shift;
    if args.no_augment {
        config.augmentation = AugmentationSpec::none();
        config.augment_training = false;
    }
    if args.no_fusion {
        config.fusion = Fusion::None;
    }
    config.features.standardize = args.standardize;
    config.pca_components = args.pca;
    config.transform = args.transform.params(0);
    config.supervision = args.transform.supervision();
    config.dl = DlConfig {
        k: args.dl_atoms,
        sparsity: args.dl_sparsity,
        iters: args.dl_iters,
    };
    let reports = run_protocol(&corpus, &methods, &config)?;
    for r in &reports {
        emit_report(r, args.out.join(r.method.name()))?;
        println!("{:<12} rank-1 {:>7.3}  rank-5 {:>7.3}", r.method.name(), r.mean_rank1, r.mean_rank5);
    }
    Ok(())
}

fn report_paths(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let direct = path.join("results.json");
    if direct.is_file() {
        return Ok(vec![direct]);
    }
    let entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut found: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path().join("results.json"))
        .filter(|p| p.is_file())
        .collect();
    found.sort();
    if found.is_empty() {
        return Err(Error::data(format!("no results.json under {}", path.display())));
    }
    Ok(found)
}

fn report(args: &ReportArgs) -> Result<()> {
    println!("{:<12} {:>8} {:>8}  per-fold rank-1", "method", "rank-1", "rank-5");
    for path in &args.paths {
        for file in report_paths(path)? {
            let r = load_report(&file)?;
            let folds: Vec<String> = r.per_fold.iter().map(|f| format!("{:.1}", f.accuracy_at(1))).collect();
            println!("{:<12} {:>8.3} {:>8.3}  {}", r.method.name(), r.mean_rank1, r.mean_rank5, folds.join(" "));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Folds(a) => folds(a),
        Command::Extract(a) => extract(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
