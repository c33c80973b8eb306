mod manifest;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use isospec::analysis::{contour_grid, eval_labels, self_validate};
use isospec::cutoff::{cutoff_for_rate, estimate_anomaly_count_repeated};
use isospec::data::{read_dataset_csv, read_labels_csv, write_dataset_csv, write_labels_csv};
use isospec::datagen::gen_experiment;
use isospec::knn::{compare_rankings, knn_rank};
use isospec::pipeline::{partition_profile, threshold};
use isospec::specnd::DEFAULT_MAX_CELLS;
use isospec::{
    compile_spec, greedy_gap_cutoff, AnomalySpec, CompileOptions, Confidence, CutoffEstimate, Dataset,
    DepthProfile, Error, Forest, ForestConfig, ProfileSource,
};

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "isospec", version, about = "Isolation-forest anomaly detection compiled to explicit regions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled synthetic dataset.
    Gen(GenArgs),
    /// Train a forest and write it as a text model.
    Train(TrainArgs),
    /// Estimate the anomaly count and cutoff depth.
    Estimate(EstimateArgs),
    /// Compile a model into an anomaly specification.
    Specify(SpecifyArgs),
    /// Label points using a specification.
    Detect(DetectArgs),
    /// Cumulative depth of every point under a model.
    Score(ScoreArgs),
    /// Compare predicted labels against ground truth.
    Eval(EvalArgs),
    /// Percentile map of cumulative depth over the data's bounding box.
    Contour(ContourArgs),
    /// Nearest-neighbour outlier ranking.
    Knn(KnnArgs),
    /// Score one seeded run against another on the same data.
    Selfcheck(SelfcheckArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=9))]
    exp: u8,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.01)]
    rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: String,
}

#[derive(Args, Clone)]
struct ForestArgs {
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 256)]
    sample: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long = "in")]
    input: String,
    #[command(flatten)]
    forest: ForestArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Snap split values to half-integers.
    #[arg(long)]
    integer_keys: bool,
    #[arg(long)]
    model: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Data,
    Ranges,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    model: String,
    #[arg(long = "in")]
    input: Option<String>,
    /// Independently seeded forests to average over (data source only).
    #[arg(long, default_value_t = 1)]
    runs: usize,
    #[arg(long, value_enum, default_value_t = Source::Data)]
    source: Source,
}

#[derive(Args)]
struct SpecifyArgs {
    #[arg(long)]
    model: String,
    /// Fixed cutoff depth; estimated when absent.
    #[arg(long, conflicts_with = "rate")]
    cutoff: Option<u32>,
    /// Known anomaly rate of the data given with --in.
    #[arg(long, requires = "input")]
    rate: Option<f64>,
    /// Estimate the cutoff from these points instead of from the model's ranges.
    #[arg(long = "in")]
    input: Option<String>,
    /// Minimum cell width, one value for all dimensions or one per dimension.
    #[arg(long, value_delimiter = ',')]
    min_cell: Option<Vec<f64>>,
    /// Prune the forest at the cutoff before compiling.
    #[arg(long)]
    prune: bool,
    /// Allow more than three dimensions.
    #[arg(long)]
    force: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_CELLS)]
    max_cells: u128,
    #[arg(long)]
    out: String,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    spec: String,
    #[arg(long = "in")]
    input: String,
    #[arg(long)]
    out: String,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: String,
    #[arg(long = "in")]
    input: String,
    #[arg(long)]
    out: String,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: String,
    #[arg(long)]
    truth: String,
}

#[derive(Args)]
struct ContourArgs {
    #[arg(long)]
    model: String,
    #[arg(long = "in")]
    input: String,
    #[arg(long, default_value_t = 450)]
    w: usize,
    #[arg(long, default_value_t = 250)]
    h: usize,
    /// Written as PGM when the name ends in `.pgm`, CSV otherwise.
    #[arg(long)]
    out: String,
}

#[derive(Args)]
struct KnnArgs {
    #[arg(long = "in")]
    input: String,
    #[arg(long, default_value_t = 200)]
    max_k: usize,
    #[arg(long)]
    out: String,
    /// Compare against this model's detections.
    #[arg(long)]
    model: Option<String>,
    /// Known anomaly rate for the comparison; greedy cutoff otherwise.
    #[arg(long, requires = "model")]
    rate: Option<f64>,
}

#[derive(Args)]
struct SelfcheckArgs {
    #[arg(long = "in")]
    input: String,
    #[arg(long, value_delimiter = ',', num_args = 1)]
    seeds: Vec<u64>,
    #[command(flatten)]
    forest: ForestArgs,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: 1,
            msg: msg.into(),
        }
    }

    fn data(msg: impl Into<String>) -> Self {
        Self {
            code: 2,
            msg: msg.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) => 1,
            Error::IntractableDimensionality(_) | Error::GridTooLarge { .. } => 3,
            _ => 2,
        };
        Self {
            code,
            msg: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn with_path(path: &str) -> impl FnOnce(Error) -> Failure + '_ {
    move |e| {
        let mut f = Failure::from(e);
        f.msg = format!("{path}: {}", f.msg);
        f
    }
}

fn open(path: &str) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::data(format!("{path}: {e}")))
}

fn create(path: &str) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::data(format!("{path}: {e}")))
}

fn write_file(path: &str, bytes: &[u8]) -> CliResult {
    std::fs::write(path, bytes).map_err(|e| Failure::data(format!("{path}: {e}")))
}

fn read_data(path: &str) -> CliResult<(Dataset, Option<Vec<bool>>)> {
    read_dataset_csv(open(path)?).map_err(with_path(path))
}

fn read_model(path: &str) -> CliResult<Forest> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{path}: {e}")))?;
    Forest::from_text(&text).map_err(with_path(path))
}

fn forest_config(forest: &Forest) -> ForestConfig {
    ForestConfig {
        tree_count: forest.tree_count(),
        sample_size: forest.sample_size(),
        seed: forest.seed(),
        integer_keys: forest.integer_keys(),
    }
}

fn confidence_name(c: Confidence) -> &'static str {
    match c {
        Confidence::High => "high",
        Confidence::Low => "low",
    }
}

fn print_estimate(e: &CutoffEstimate) {
    println!("anomaly_count={}", e.anomaly_count);
    println!("cutoff={}", e.cutoff_depth);
    println!("confidence={}", confidence_name(e.confidence));
}

fn check_rate(rate: f64) -> CliResult {
    if rate > 0.0 && rate < 1.0 {
        Ok(())
    } else {
        Err(Failure::usage(format!("rate must lie in (0, 1), got {rate}")))
    }
}

fn gen(a: GenArgs, m: &mut RunManifest) -> CliResult {
    check_rate(a.rate)?;
    m.seed = Some(a.seed);
    m.param("exp", a.exp);
    m.param("n", a.n);
    m.param("rate", a.rate);
    m.output(&a.out);
    m.stage("generate");
    let set = gen_experiment(a.exp, a.n, a.rate, a.seed)?;
    m.stage("write");
    let mut out = create(&a.out)?;
    write_dataset_csv(&mut out, &set.data, Some(&set.labels)).map_err(with_path(&a.out))?;
    out.flush().map_err(|e| Failure::data(format!("{}: {e}", a.out)))
}

fn train(a: TrainArgs, m: &mut RunManifest) -> CliResult {
    m.seed = Some(a.seed);
    m.param("trees", a.forest.trees);
    m.param("sample", a.forest.sample);
    m.param("integer_keys", a.integer_keys);
    m.input(&a.input);
    m.output(&a.model);
    m.stage("read");
    let (data, _) = read_data(&a.input)?;
    if data.len() < a.forest.sample {
        return Err(Failure::data(format!(
            "{}: {} points is fewer than the sample size {}",
            a.input,
            data.len(),
            a.forest.sample
        )));
    }
    m.stage("build");
    let config = ForestConfig {
        tree_count: a.forest.trees,
        sample_size: a.forest.sample,
        seed: a.seed,
        integer_keys: a.integer_keys,
    };
    let forest = Forest::build(&data, &config)?;
    m.stage("write");
    write_file(&a.model, forest.to_text().as_bytes())
}

fn estimate(a: EstimateArgs, m: &mut RunManifest) -> CliResult {
    m.param("runs", a.runs);
    m.param(
        "source",
        match a.source {
            Source::Data => "data",
            Source::Ranges => "ranges",
        },
    );
    m.input(&a.model);
    m.stage("read");
    let forest = read_model(&a.model)?;
    m.seed = Some(forest.seed());
    match a.source {
        Source::Ranges => {
            if a.runs != 1 {
                return Err(Failure::usage("--runs applies to the data source only"));
            }
            m.stage("estimate");
            let profile = partition_profile(&forest, DEFAULT_MAX_CELLS)?;
            print_estimate(&greedy_gap_cutoff(&profile)?);
        }
        Source::Data => {
            let input = a
                .input
                .as_deref()
                .ok_or_else(|| Failure::usage("--in is required for the data source"))?;
            m.input(input);
            let (data, _) = read_data(input)?;
            m.stage("score");
            let depths = forest.score(&data)?;
            let profile = DepthProfile::new(depths, ProfileSource::DataPoints)?;
            m.stage("estimate");
            let single = greedy_gap_cutoff(&profile)?;
            match a.runs {
                0 => return Err(Failure::usage("--runs must be at least 1")),
                1 => print_estimate(&single),
                runs => {
                    let count = estimate_anomaly_count_repeated(&data, &forest_config(&forest), runs)?;
                    let k = count.clamp(1, profile.len());
                    let est = CutoffEstimate {
                        cutoff_depth: profile.depths()[k - 1],
                        anomaly_count: count,
                        meeting_index: single.meeting_index,
                        confidence: single.confidence,
                    };
                    print_estimate(&est);
                }
            }
        }
    }
    Ok(())
}

fn specify(a: SpecifyArgs, m: &mut RunManifest) -> CliResult {
    m.input(&a.model);
    m.output(&a.out);
    m.param("prune", a.prune);
    m.param("force", a.force);
    m.param("max_cells", a.max_cells.to_string());
    m.stage("read");
    let forest = read_model(&a.model)?;
    m.seed = Some(forest.seed());
    if forest.dims() > 3 && !a.force {
        return Err(Error::IntractableDimensionality(forest.dims()).into());
    }
    m.stage("estimate");
    let cutoff = match (a.cutoff, &a.input) {
        (Some(c), _) => c,
        (None, Some(input)) => {
            m.input(input);
            let (data, _) = read_data(input)?;
            let profile = DepthProfile::new(forest.score(&data)?, ProfileSource::DataPoints)?;
            match a.rate {
                Some(rate) => {
                    check_rate(rate)?;
                    m.param("rate", rate);
                    cutoff_for_rate(&profile, rate)?.cutoff_depth
                }
                None => greedy_gap_cutoff(&profile)?.cutoff_depth,
            }
        }
        (None, None) => greedy_gap_cutoff(&partition_profile(&forest, a.max_cells)?)?.cutoff_depth,
    };
    m.param("cutoff", cutoff);
    let min_cell = match a.min_cell {
        Some(v) if v.len() == 1 => Some(vec![v[0]; forest.dims()]),
        Some(v) if v.len() == forest.dims() => Some(v),
        Some(v) => {
            return Err(Failure::usage(format!(
                "--min-cell takes 1 or {} values, got {}",
                forest.dims(),
                v.len()
            )))
        }
        None => None,
    };
    if let Some(v) = &min_cell {
        m.param("min_cell", v.clone());
    }
    let options = CompileOptions {
        min_cell,
        prune_bound: a.prune.then_some(cutoff),
        force: a.force,
        max_cells: a.max_cells,
    };
    m.stage("specify");
    let spec = compile_spec(&forest, cutoff, &options)?;
    m.param("regions", spec.regions().len());
    m.stage("write");
    write_file(&a.out, spec.to_text().as_bytes())
}

fn detect(a: DetectArgs, m: &mut RunManifest) -> CliResult {
    m.input(&a.spec);
    m.input(&a.input);
    m.output(&a.out);
    m.stage("read");
    let text = std::fs::read_to_string(&a.spec).map_err(|e| Failure::data(format!("{}: {e}", a.spec)))?;
    let spec = AnomalySpec::from_text(&text).map_err(with_path(&a.spec))?;
    m.seed = Some(spec.provenance().seed);
    let (data, _) = read_data(&a.input)?;
    m.stage("detect");
    let start = Instant::now();
    let labels = spec.classify(&data)?;
    let secs = start.elapsed().as_secs_f64();
    m.stage("write");
    let mut out = create(&a.out)?;
    write_labels_csv(&mut out, &labels).map_err(with_path(&a.out))?;
    out.flush().map_err(|e| Failure::data(format!("{}: {e}", a.out)))?;
    println!("points={}", labels.len());
    println!("anomalies={}", labels.iter().filter(|&&l| l).count());
    println!("points_per_sec={:.0}", labels.len() as f64 / secs.max(1e-9));
    Ok(())
}

fn score(a: ScoreArgs, m: &mut RunManifest) -> CliResult {
    m.input(&a.model);
    m.input(&a.input);
    m.output(&a.out);
    m.stage("read");
    let forest = read_model(&a.model)?;
    m.seed = Some(forest.seed());
    let (data, _) = read_data(&a.input)?;
    m.stage("score");
    let depths = forest.score(&data)?;
    m.stage("write");
    let mut out = create(&a.out)?;
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(out, "depth")?;
        for d in &depths {
            writeln!(out, "{d}")?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Failure::data(format!("{}: {e}", a.out)))
}

fn eval(a: EvalArgs) -> CliResult {
    let pred = read_labels_csv(open(&a.pred)?).map_err(with_path(&a.pred))?;
    let truth = read_labels_csv(open(&a.truth)?).map_err(with_path(&a.truth))?;
    if pred.len() != truth.len() {
        return Err(Failure::data(format!(
            "{} has {} labels but {} has {}",
            a.pred,
            pred.len(),
            a.truth,
            truth.len()
        )));
    }
    print!("{}", eval_labels(&pred, &truth)?.to_key_values());
    Ok(())
}

fn contour(a: ContourArgs, m: &mut RunManifest) -> CliResult {
    m.input(&a.model);
    m.input(&a.input);
    m.output(&a.out);
    m.param("w", a.w);
    m.param("h", a.h);
    m.stage("read");
    let forest = read_model(&a.model)?;
    m.seed = Some(forest.seed());
    let (data, _) = read_data(&a.input)?;
    m.stage("contour");
    let grid = contour_grid(&forest, &data, a.w, a.h)?;
    m.stage("write");
    let is_pgm = Path::new(&a.out)
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        write_file(&a.out, &grid.to_pgm())
    } else {
        write_file(&a.out, grid.to_csv().as_bytes())
    }
}

fn knn(a: KnnArgs, m: &mut RunManifest) -> CliResult {
    m.input(&a.input);
    m.output(&a.out);
    m.param("max_k", a.max_k);
    m.stage("read");
    let (data, _) = read_data(&a.input)?;
    m.stage("rank");
    let ranking = knn_rank(&data, a.max_k)?;
    m.stage("write");
    let mut text = String::from("index,score,best_k\n");
    for &i in &ranking.order {
        text.push_str(&format!(
            "{i},{},{}\n",
            isospec::data::format_float(ranking.scores[i]),
            ranking.best_k[i]
        ));
    }
    write_file(&a.out, text.as_bytes())?;
    if let Some(model) = &a.model {
        m.input(model);
        m.stage("compare");
        let forest = read_model(model)?;
        m.seed = Some(forest.seed());
        let depths = forest.score(&data)?;
        let profile = DepthProfile::new(depths.clone(), ProfileSource::DataPoints)?;
        let est = match a.rate {
            Some(rate) => {
                check_rate(rate)?;
                m.param("rate", rate);
                cutoff_for_rate(&profile, rate)?
            }
            None => greedy_gap_cutoff(&profile)?,
        };
        let detected = threshold(&depths, est.cutoff_depth);
        let cmp = compare_rankings(&depths, &detected, &ranking)?;
        println!("pearson_r={}", cmp.pearson_r);
        println!("best_f_measure={}", cmp.best_f_measure);
        println!("best_m={}", cmp.best_m);
        println!("matched={}", cmp.matched);
    }
    Ok(())
}

fn selfcheck(a: SelfcheckArgs, m: &mut RunManifest) -> CliResult {
    let [seed_a, seed_b] = a.seeds[..] else {
        return Err(Failure::usage("--seeds takes exactly two values, e.g. --seeds 1,2"));
    };
    m.seed = Some(seed_a);
    m.param("seeds", vec![seed_a, seed_b]);
    m.param("trees", a.forest.trees);
    m.param("sample", a.forest.sample);
    m.input(&a.input);
    m.stage("read");
    let (data, _) = read_data(&a.input)?;
    m.stage("validate");
    let config = ForestConfig {
        tree_count: a.forest.trees,
        sample_size: a.forest.sample,
        ..ForestConfig::default()
    };
    let v = self_validate(&data, &config, seed_a, seed_b)?;
    print!("{}", v.report.to_key_values());
    println!("control_count={}", v.control.anomaly_count);
    println!("trial_count={}", v.trial.anomaly_count);
    Ok(())
}

fn run(command: Command) -> CliResult {
    let name = match &command {
        Command::Gen(_) => "gen",
        Command::Train(_) => "train",
        Command::Estimate(_) => "estimate",
        Command::Specify(_) => "specify",
        Command::Detect(_) => "detect",
        Command::Score(_) => "score",
        Command::Eval(_) => "eval",
        Command::Contour(_) => "contour",
        Command::Knn(_) => "knn",
        Command::Selfcheck(_) => "selfcheck",
    };
    let mut m = RunManifest::new(name);
    let result = match command {
        Command::Gen(a) => gen(a, &mut m),
        Command::Train(a) => train(a, &mut m),
        Command::Estimate(a) => estimate(a, &mut m),
        Command::Specify(a) => specify(a, &mut m),
        Command::Detect(a) => detect(a, &mut m),
        Command::Score(a) => score(a, &mut m),
        Command::Eval(a) => {
            m.input(&a.pred);
            m.input(&a.truth);
            m.stage("eval");
            eval(a)
        }
        Command::Contour(a) => contour(a, &mut m),
        Command::Knn(a) => knn(a, &mut m),
        Command::Selfcheck(a) => selfcheck(a, &mut m),
    };
    m.emit();
    result
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
