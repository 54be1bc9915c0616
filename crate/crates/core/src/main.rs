use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;

use spectral_gng::eval::{clustering_accuracy, evaluate, Metric};
use spectral_gng::image::{segment_image, RgbImage};
use spectral_gng::io::{read_labels, read_points, write_labels, LabelColumn};
use spectral_gng::report::{write_json, EvalReport, PipelineReport, SweepReport, SweepRun, SweepSummary};
use spectral_gng::select::RefineMode;
use spectral_gng::synth::{generate, Blob, Ring, SyntheticSpec};
use spectral_gng::{cluster_points, Error, FeatureMode, NeuronCount, RunConfig};

#[derive(Parser)]
#[command(name = "spectral-gng", version, about = "Spectral clustering over a growing neural gas")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled synthetic point set as CSV (x,y,label).
    Gen(GenArgs),
    /// Cluster point sets.
    Cluster(ClusterArgs),
    /// Segment PNG or PPM images.
    Segment(SegmentArgs),
    /// Compare a predicted labelling with ground truth.
    Eval(EvalArgs),
    /// Cluster one point set across consecutive seeds and aggregate accuracy.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Rings,
    Blobs,
    RingsWithNoise,
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    kind: GenKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ring radii.
    #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
    radii: Vec<f64>,
    /// Ring width.
    #[arg(long, default_value_t = spectral_gng::synth::RING_WIDTH)]
    width: f64,
    /// Points per ring or blob; one value applies to all.
    #[arg(long, value_delimiter = ',', default_value = "300")]
    counts: Vec<usize>,
    /// Blob centers as `x:y` pairs; defaults to a triangle with sides of 10 sigma.
    #[arg(long, value_delimiter = ',')]
    centers: Vec<String>,
    /// Blob standard deviation.
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    /// Uniform noise points for rings-with-noise.
    #[arg(long, default_value_t = 100)]
    noise: usize,
    /// Output CSV (stdout when omitted).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

/// Overrides for [`RunConfig`]; unset flags keep the config file or default value.
#[derive(Args, Clone)]
struct RunArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for every random choice in the run.
    #[arg(long)]
    seed: Option<u64>,
    /// GNG size, or "auto".
    #[arg(long)]
    m: Option<NeuronCount>,
    /// Rank of the neighbour defining each local scale.
    #[arg(long = "local-scale-k", short = 'K')]
    local_scale_k: Option<usize>,
    /// Cumulative variance kept when refining the chosen eigenvectors.
    #[arg(long)]
    variance_threshold: Option<f64>,
    /// eigenvector_prefix or principal_components.
    #[arg(long, value_parser = parse_refine_mode)]
    refine_mode: Option<RefineMode>,
    /// Largest cluster count tried.
    #[arg(long)]
    k_max: Option<usize>,
    /// rgb or rgbxy.
    #[arg(long)]
    feature_mode: Option<FeatureMode>,
    /// Candidate GNG sizes for the elbow search.
    #[arg(long, value_delimiter = ',')]
    elbow_candidates: Option<Vec<usize>>,
    /// Train the image GNG on at most this many pixels (0 disables the cap).
    #[arg(long)]
    max_training_pixels: Option<usize>,
    /// Skip the 3x3 mode filter on image labels.
    #[arg(long)]
    no_median_filter: bool,
    /// Winner learning rate.
    #[arg(long)]
    eps_b: Option<f64>,
    /// Neighbour learning rate.
    #[arg(long)]
    eps_n: Option<f64>,
    /// Signals between neuron insertions.
    #[arg(long)]
    insert_interval: Option<usize>,
    /// Edge age at which edges are removed.
    #[arg(long)]
    max_age: Option<u32>,
    /// Error multiplier on insertion.
    #[arg(long)]
    alpha: Option<f64>,
    /// Error decay applied after every training pass.
    #[arg(long)]
    beta: Option<f64>,
    /// Relative quantization-error change treated as stable.
    #[arg(long)]
    stability_tol: Option<f64>,
    /// Upper bound on training passes.
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Write the effective configuration here.
    #[arg(long)]
    save_config: Option<PathBuf>,
    /// Include wall-clock timings in reports.
    #[arg(long)]
    timings: bool,
}

fn parse_refine_mode(s: &str) -> Result<RefineMode, String> {
    match s {
        "eigenvector_prefix" | "prefix" => Ok(RefineMode::EigenvectorPrefix),
        "principal_components" | "pca" => Ok(RefineMode::PrincipalComponents),
        _ => Err(format!("unknown refine mode {s:?} (eigenvector_prefix | principal_components)")),
    }
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, Failure> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p).map_err(Failure::input)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident).+ <- $flag:ident) => {
                if let Some(v) = self.$flag.clone() {
                    c.$($field).+ = v;
                }
            };
        }
        set!(seed <- seed);
        set!(m <- m);
        set!(local_scale_k <- local_scale_k);
        set!(variance_threshold <- variance_threshold);
        set!(refine_mode <- refine_mode);
        set!(k_max <- k_max);
        set!(feature_mode <- feature_mode);
        set!(elbow_candidates <- elbow_candidates);
        set!(gng.eps_b <- eps_b);
        set!(gng.eps_n <- eps_n);
        set!(gng.insert_interval <- insert_interval);
        set!(gng.max_age <- max_age);
        set!(gng.alpha <- alpha);
        set!(gng.beta <- beta);
        set!(gng.stability_tol <- stability_tol);
        set!(gng.max_epochs <- max_epochs);
        if let Some(cap) = self.max_training_pixels {
            c.max_training_pixels = (cap > 0).then_some(cap);
        }
        if self.no_median_filter {
            c.median_filter = false;
        }
        c.validate().map_err(Failure::input)?;
        if let Some(p) = &self.save_config {
            c.save(p).map_err(Failure::input)?;
        }
        Ok(c)
    }
}

#[derive(Args)]
struct ClusterArgs {
    /// Point CSV files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output directory (one subdirectory per input when several are given).
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// How to treat the last CSV column.
    #[arg(long, default_value = "auto")]
    label_column: LabelColumn,
    /// Inputs processed concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct SegmentArgs {
    /// PNG or binary PPM images.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output directory (one subdirectory per input when several are given).
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// Images processed concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted labels: label CSV, label grid CSV or label PNG.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth labels in the same formats; label 0 is background for the F-measure.
    #[arg(long)]
    gt: PathBuf,
    /// Metrics to compute.
    #[arg(long, value_delimiter = ',', default_value = "f_measure,covering,pri,vi,accuracy")]
    metrics: Vec<Metric>,
    /// Also write the JSON here.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Labelled point CSV.
    input: PathBuf,
    /// Number of seeds, starting from --seed.
    #[arg(long, default_value_t = 10)]
    runs: u64,
    /// How to treat the last CSV column.
    #[arg(long, default_value = "auto")]
    label_column: LabelColumn,
    /// Seeds run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// JSON output (stdout when omitted).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// First seed (required).
    #[arg(long, required = true)]
    seed: u64,
    #[command(flatten)]
    run: SweepRunArgs,
}

/// Run flags for sweep; the seed comes from the sweep itself.
#[derive(Args)]
struct SweepRunArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// GNG size, or "auto".
    #[arg(long)]
    m: Option<NeuronCount>,
    /// Rank of the neighbour defining each local scale.
    #[arg(long = "local-scale-k", short = 'K')]
    local_scale_k: Option<usize>,
    /// Cumulative variance kept when refining the chosen eigenvectors.
    #[arg(long)]
    variance_threshold: Option<f64>,
    /// eigenvector_prefix or principal_components.
    #[arg(long, value_parser = parse_refine_mode)]
    refine_mode: Option<RefineMode>,
    /// Largest cluster count tried.
    #[arg(long)]
    k_max: Option<usize>,
}

impl SweepRunArgs {
    fn into_run_args(self) -> RunArgs {
        RunArgs {
            config: self.config,
            seed: None,
            m: self.m,
            local_scale_k: self.local_scale_k,
            variance_threshold: self.variance_threshold,
            refine_mode: self.refine_mode,
            k_max: self.k_max,
            feature_mode: None,
            elbow_candidates: None,
            max_training_pixels: None,
            no_median_filter: false,
            eps_b: None,
            eps_n: None,
            insert_interval: None,
            max_age: None,
            alpha: None,
            beta: None,
            stability_tol: None,
            max_epochs: None,
            save_config: None,
            timings: false,
        }
    }
}

/// An error with the process exit code it maps to.
struct Failure {
    code: u8,
    error: Error,
}

impl Failure {
    /// Unreadable or malformed input: exit 2.
    fn input(error: Error) -> Self {
        Self { code: 2, error }
    }

    /// Pipeline failure: exit 1, or 2 when the root cause is I/O.
    fn run(error: Error) -> Self {
        let code = if matches!(error.root(), Error::Io { .. }) { 2 } else { 1 };
        Self { code, error }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Segment(a) => cmd_segment(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn per_item<T: Clone>(values: &[T], n: usize, what: &str) -> Result<Vec<T>, Failure> {
    match values.len() {
        1 => Ok(vec![values[0].clone(); n]),
        len if len == n => Ok(values.to_vec()),
        len => Err(Failure::input(Error::invalid(format!("{len} {what} given for {n} items")))),
    }
}

fn cmd_gen(a: GenArgs) -> Result<(), Failure> {
    let rings = || -> Result<Vec<Ring>, Failure> {
        let counts = per_item(&a.counts, a.radii.len(), "counts")?;
        Ok(a.radii.iter().zip(counts).map(|(&radius, count)| Ring { radius, width: a.width, count }).collect())
    };
    let spec = match a.kind {
        GenKind::Rings => SyntheticSpec::Rings { rings: rings()? },
        GenKind::RingsWithNoise => SyntheticSpec::RingsWithNoise { rings: rings()?, noise: a.noise },
        GenKind::Blobs => {
            if a.centers.is_empty() {
                let SyntheticSpec::Blobs { mut blobs } = SyntheticSpec::three_blobs(1, a.sigma) else { unreachable!() };
                for (b, count) in blobs.iter_mut().zip(per_item(&a.counts, 3, "counts")?) {
                    b.count = count;
                }
                SyntheticSpec::Blobs { blobs }
            } else {
                let counts = per_item(&a.counts, a.centers.len(), "counts")?;
                let blobs = a
                    .centers
                    .iter()
                    .zip(counts)
                    .map(|(c, count)| {
                        let xy: Vec<f64> = c.split(':').filter_map(|v| v.trim().parse().ok()).collect();
                        match xy[..] {
                            [x, y] => Ok(Blob { center: [x, y], sigma: a.sigma, count }),
                            _ => Err(Failure::input(Error::invalid(format!("bad blob center {c:?}; expected x:y")))),
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                SyntheticSpec::Blobs { blobs }
            }
        }
    };
    let data = generate(&spec, a.seed).map_err(Failure::input)?;
    match &a.out {
        Some(p) => data.write_csv(p).map_err(Failure::run)?,
        None => spectral_gng::synth::write_csv_to(&data, std::io::stdout().lock()).map_err(Failure::run)?,
    }
    info!("generated {} points", data.len());
    Ok(())
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Failure::run(Error::invalid(e.to_string())))
}

/// Output directory for one input of a batch.
fn out_dir(base: &Path, input: &Path, batch: bool) -> Result<PathBuf, Failure> {
    let dir = if batch {
        base.join(input.file_stem().unwrap_or_default())
    } else {
        base.to_path_buf()
    };
    std::fs::create_dir_all(&dir).map_err(|e| Failure::run(Error::io(&dir, e)))?;
    Ok(dir)
}

/// Runs `f` over every input with `jobs` workers; reports every failure and
/// returns the first one.
fn run_batch(
    inputs: &[PathBuf],
    jobs: usize,
    f: impl Fn(&Path) -> Result<(), Failure> + Sync,
) -> Result<(), Failure> {
    let results: Vec<Result<(), Failure>> = if jobs > 1 && inputs.len() > 1 {
        pool(jobs)?.install(|| inputs.par_iter().map(|p| f(p)).collect())
    } else {
        inputs.iter().map(|p| f(p)).collect()
    };
    let mut first = None;
    for (input, r) in inputs.iter().zip(results) {
        if let Err(e) = r {
            if inputs.len() > 1 {
                eprintln!("{}: {}", input.display(), e.error);
            }
            first.get_or_insert(e);
        }
    }
    first.map_or(Ok(()), Err)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::run(Error::io(path, e)))
}

fn cmd_cluster(a: ClusterArgs) -> Result<(), Failure> {
    let cfg = a.run.config()?;
    let batch = a.inputs.len() > 1;
    run_batch(&a.inputs, a.jobs, |input| {
        let file = read_points(input, a.label_column).map_err(Failure::input)?;
        let run = cluster_points(&file.points, &cfg).map_err(Failure::run)?;
        let dir = out_dir(&a.out, input, batch)?;
        let report = PipelineReport::from_points(&input.display().to_string(), &cfg, &file.points, &run, a.run.timings);

        let mut neurons = String::from("neuron,label");
        for d in 0..run.model.dim() {
            neurons.push_str(&format!(",x{d}"));
        }
        neurons.push('\n');
        for (i, (n, l)) in run.model.neurons.iter().zip(&run.outcome.labels).enumerate() {
            let coords: Vec<String> = n.position.iter().map(f64::to_string).collect();
            neurons.push_str(&format!("{i},{l},{}\n", coords.join(",")));
        }
        write_text(&dir.join("neuron_labels.csv"), &neurons)?;
        write_labels(&dir.join("point_labels.csv"), &run.point_labels).map_err(Failure::run)?;
        report.write(&dir.join("report.json")).map_err(Failure::run)?;
        write_text(&dir.join("scores.csv"), &report.scores_csv())?;
        write_text(&dir.join("k_curve.csv"), &report.k_curve_csv())?;

        let chosen = report.selection.as_ref().map(|s| s.chosen.clone()).unwrap_or_default();
        let accuracy = file
            .labels
            .as_ref()
            .and_then(|t| clustering_accuracy(&run.point_labels, t).ok())
            .map(|acc| format!(" accuracy={acc:.4}"))
            .unwrap_or_default();
        println!(
            "{}: n={} m={} chosen_k={} eigenvectors={chosen:?}{accuracy}",
            input.display(),
            file.points.len(),
            run.model.len(),
            run.outcome.chosen_k
        );
        Ok(())
    })
}

fn cmd_segment(a: SegmentArgs) -> Result<(), Failure> {
    let cfg = a.run.config()?;
    let batch = a.inputs.len() > 1;
    run_batch(&a.inputs, a.jobs, |input| {
        let image = RgbImage::read(input).map_err(Failure::input)?;
        let run = segment_image(&image, &cfg).map_err(Failure::run)?;
        let dir = out_dir(&a.out, input, batch)?;
        let dim = match cfg.feature_mode {
            FeatureMode::Rgb => 3,
            FeatureMode::Rgbxy => 5,
        };
        let report = PipelineReport::from_image(&input.display().to_string(), &cfg, &run, dim, a.run.timings);
        run.labels.write_png(&dir.join("labels.png")).map_err(Failure::run)?;
        run.labels.write_csv(&dir.join("labels.csv")).map_err(Failure::run)?;
        report.write(&dir.join("report.json")).map_err(Failure::run)?;
        println!(
            "{}: {}x{} chosen_k={} segments={}",
            input.display(),
            image.width,
            image.height,
            run.chosen_k,
            run.labels.label_count()
        );
        Ok(())
    })
}

fn cmd_eval(a: EvalArgs) -> Result<(), Failure> {
    let pred = read_labels(&a.pred).map_err(Failure::input)?;
    let gt = read_labels(&a.gt).map_err(Failure::input)?;
    let metrics = evaluate(&pred, &gt, &a.metrics).map_err(|e| match e.root() {
        Error::DimensionMismatch { .. } => Failure { code: 3, error: e },
        _ => Failure::input(e),
    })?;
    let report = EvalReport {
        pred: a.pred.display().to_string(),
        gt: a.gt.display().to_string(),
        n: pred.len(),
        metrics,
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if let Some(p) = &a.out {
        write_json(p, &report).map_err(Failure::run)?;
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Failure> {
    let base = a.run.into_run_args().config()?;
    let file = read_points(&a.input, a.label_column).map_err(Failure::input)?;
    if file.labels.is_none() {
        log::warn!("{} has no label column; accuracy is not reported", a.input.display());
    }
    let seeds: Vec<u64> = (0..a.runs).map(|i| a.seed.wrapping_add(i)).collect();
    let one = |seed: u64| -> Result<SweepRun, Failure> {
        let cfg = RunConfig { seed, ..base.clone() };
        let run = cluster_points(&file.points, &cfg).map_err(Failure::run)?;
        let accuracy = match &file.labels {
            Some(t) => Some(clustering_accuracy(&run.point_labels, t).map_err(Failure::run)?),
            None => None,
        };
        info!("seed {seed}: chosen_k={}", run.outcome.chosen_k);
        Ok(SweepRun {
            seed,
            chosen_k: run.outcome.chosen_k,
            chosen_eigenvectors: run.outcome.selection.as_ref().map_or(0, |s| s.chosen.len()),
            accuracy,
        })
    };
    let runs = pool(a.jobs)?.install(|| seeds.par_iter().map(|&s| one(s)).collect::<Result<Vec<_>, _>>())?;
    let report = SweepReport {
        input: a.input.display().to_string(),
        config: RunConfig { seed: a.seed, ..base },
        summary: SweepSummary::new(&runs),
        runs,
    };
    match &a.out {
        Some(p) => write_json(p, &report).map_err(Failure::run)?,
        None => println!("{}", serde_json::to_string_pretty(&report).expect("report serializes")),
    }
    Ok(())
}
