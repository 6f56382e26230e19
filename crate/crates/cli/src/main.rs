use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use twoport_core::count::{canonical_count_series, count_canonical};
use twoport_core::dataset::{self, GenerateOptions, GridSpec, Split, SplitSpec};
use twoport_core::diffsim::{refine, CandidateConfig, RefineOptions};
use twoport_core::enumerate::enumerate_canonical;
use twoport_core::eval::{evaluate, MatchMode};
use twoport_core::ga::{evolve, GaParams};
use twoport_core::sim::simulate;
use twoport_core::spectrum_io::{self, Format};
use twoport_core::adam::AdamConfig;
use twoport_core::{Configuration, CurrentProbe, Setup, Termination, ValueGrid};
use twoport_neural::checkpoint::{self, Header};
use twoport_neural::predict::{decode_normalized, predict};
use twoport_neural::train::{samples_of, train, TrainConfig};
use twoport_neural::{Dims, Mode, Model, NeuralError};

#[derive(Parser)]
#[command(name = "twoport", version, about = "Two-port ladder circuit design toolkit")]
struct Cli {
    /// Worker threads (default: all cores). TPF_THREADS overrides.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Number of canonical chains of length n.
    Count {
        n: i64,
        #[arg(long, default_value_t = 3)]
        nc: usize,
        #[arg(long, default_value_t = 5)]
        nv: usize,
        /// Print every coefficient from 0 to n.
        #[arg(long)]
        series: bool,
    },
    /// List every canonical chain of length n, one literal per line.
    Enumerate {
        n: usize,
        #[arg(long, default_value_t = 3)]
        nc: usize,
        #[arg(long, default_value_t = 5)]
        nv: usize,
        /// Refuse to list more than this many chains.
        #[arg(long, default_value_t = 10_000_000)]
        limit: u64,
    },
    /// Simulate a chain and write its spectrum.
    Simulate {
        #[arg(long)]
        config: String,
        #[command(flatten)]
        setup: SetupArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, value_enum, default_value_t = OutFormat::Csv)]
        out: OutFormat,
        /// Write to this file instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit the values of a fixed structure to a target spectrum.
    Refine {
        #[arg(long)]
        config: String,
        /// Spectrum file (CSV or binary).
        #[arg(long)]
        target: PathBuf,
        #[command(flatten)]
        setup: SetupArgs,
        #[arg(long, default_value_t = 5000)]
        iters: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 1e-8)]
        threshold: f64,
    },
    /// Genetic search for a chain matching a target spectrum.
    Ga {
        #[command(flatten)]
        target: TargetArgs,
        #[command(flatten)]
        setup: SetupArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 100)]
        population: usize,
        #[arg(long, default_value_t = 10)]
        elites: usize,
        #[arg(long, default_value_t = 0.01)]
        mutation: f64,
        #[arg(long, default_value_t = 1000)]
        generations: usize,
        #[arg(long, default_value_t = 10)]
        max_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write `generation,best_loss` rows here.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Generate a dataset directory.
    GenDataset {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = SpecChoice::Full)]
        spec: SpecChoice,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        setup: SetupArgs,
        /// Also store the raw complex spectra.
        #[arg(long)]
        with_raw: bool,
    },
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Predict a chain from a spectrum file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        spectrum: PathBuf,
        /// Fit the decoded chain's values to the spectrum.
        #[arg(long)]
        refine: bool,
        #[command(flatten)]
        setup: SetupArgs,
    },
    /// Per-length accuracy of a model on a dataset split, as CSV.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
        split: SplitChoice,
        /// Compare chains position by position instead of canonical forms.
        #[arg(long)]
        positional: bool,
    },
}

#[derive(Args)]
struct SetupArgs {
    /// `load:<ohms>` or `open`.
    #[arg(long, default_value = "load:1", value_parser = parse_termination)]
    term: Termination,
    /// Port whose current is reported.
    #[arg(long, value_enum, default_value_t = ProbeChoice::Input)]
    probe: ProbeChoice,
}

impl SetupArgs {
    fn setup(&self) -> Setup {
        Setup::new(
            self.term,
            match self.probe {
                ProbeChoice::Input => CurrentProbe::Input,
                ProbeChoice::Output => CurrentProbe::Output,
            },
        )
    }
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value_t = 1.0)]
    fmin: f64,
    #[arg(long, default_value_t = 1e6)]
    fmax: f64,
    #[arg(long, default_value_t = 512)]
    points: usize,
}

impl GridArgs {
    fn spec(&self) -> GridSpec {
        GridSpec {
            f_min: self.fmin,
            f_max: self.fmax,
            d: self.points,
        }
    }
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct TargetArgs {
    /// Spectrum file (CSV or binary).
    #[arg(long)]
    target: Option<PathBuf>,
    /// Simulate this chain as the target.
    #[arg(long)]
    target_config: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_parser = parse_mode)]
    mode: Mode,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = DimsChoice::Full)]
    dims: DimsChoice,
    #[arg(long, default_value_t = 700)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0.5)]
    teacher_forcing: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 5.0)]
    clip: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Train on a seeded subsample of this many records.
    #[arg(long)]
    train_limit: Option<usize>,
    /// Write the training log as JSON.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Bin,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProbeChoice {
    Input,
    Output,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpecChoice {
    Full,
    Reduced,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitChoice {
    Train,
    Val,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum DimsChoice {
    Full,
    Desk,
}

fn parse_termination(s: &str) -> Result<Termination, String> {
    let t = if s == "open" {
        Termination::OpenCircuit
    } else if let Some(z) = s.strip_prefix("load:") {
        Termination::Load(twoport_core::literal::parse_si(z).map_err(|e| e.to_string())?)
    } else {
        return Err(format!("expected `load:<ohms>` or `open`, got `{s}`"));
    };
    t.validate().map_err(|e| e.to_string())?;
    Ok(t)
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: NeuralError| e.to_string())
}

/// Message plus process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<twoport_core::Error> for Failure {
    fn from(e: twoport_core::Error) -> Self {
        Failure {
            code: if e.is_numerical() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

impl From<NeuralError> for Failure {
    fn from(e: NeuralError) -> Self {
        Failure {
            code: if e.is_numerical() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<(), Failure>;

fn threads(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    match std::env::var("TPF_THREADS") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| Failure {
            code: 2,
            message: format!("TPF_THREADS must be a positive integer, got `{v}`"),
        }),
        Err(_) => Ok(flag),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || -> Outcome {
        if let Some(n) = threads(cli.threads)?.filter(|&n| n > 0) {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure {
                    code: 2,
                    message: e.to_string(),
                })?;
        }
        dispatch(cli.command)
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn literal(s: &str) -> Result<Configuration, Failure> {
    Ok(s.parse::<Configuration>()?)
}

fn dispatch(command: Command) -> Outcome {
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    match command {
        Command::Count { n, nc, nv, series } => {
            if series {
                if n < 0 {
                    return Err(twoport_core::Error::InvalidInput(format!("length must be nonnegative, got {n}")).into());
                }
                for (k, c) in canonical_count_series(n as usize, nc, nv)?.iter().enumerate() {
                    writeln!(out, "{k},{c}")?;
                }
            } else {
                writeln!(out, "{}", count_canonical(n, nc, nv)?.count)?;
            }
        }
        Command::Enumerate { n, nc, nv, limit } => {
            for c in enumerate_canonical(n, nc, nv, limit)? {
                writeln!(out, "{c}")?;
            }
        }
        Command::Simulate {
            config,
            setup,
            grid,
            out: format,
            output,
        } => {
            let c = literal(&config)?;
            let s = simulate(&c, &grid.spec().build()?, &setup.setup())?;
            let format = match format {
                OutFormat::Csv => Format::Csv,
                OutFormat::Bin => Format::Binary,
            };
            match output {
                Some(path) => spectrum_io::save(&s, &path, format)?,
                None => match format {
                    Format::Csv => spectrum_io::write_csv(&s, &mut out)?,
                    Format::Binary => spectrum_io::write_binary(&s, &mut out)?,
                },
            }
        }
        Command::Refine {
            config,
            target,
            setup,
            iters,
            lr,
            threshold,
        } => {
            let c = literal(&config)?;
            let t = spectrum_io::load(&target)?;
            let start = CandidateConfig::from_config(&c);
            let opts = RefineOptions {
                max_iters: iters,
                threshold,
                adam: AdamConfig::with_lr(lr),
            };
            let r = refine(&start, &t, &setup.setup(), &opts)?;
            writeln!(out, "{}", r.candidate.to_config(&ValueGrid::default())?)?;
            writeln!(out, "{}", json(&r.report(&start))?)?;
        }
        Command::Ga {
            target,
            setup,
            grid,
            population,
            elites,
            mutation,
            generations,
            max_len,
            seed,
            history,
        } => {
            let setup = setup.setup();
            let t = match (target.target, target.target_config) {
                (Some(p), _) => spectrum_io::load(&p)?,
                (None, Some(c)) => simulate(&literal(&c)?, &grid.spec().build()?, &setup)?,
                (None, None) => unreachable!("clap requires one target"),
            };
            let params = GaParams {
                population,
                elites,
                mutation_prob: mutation,
                generations,
                max_len,
                init_len: (1, max_len),
                ..GaParams::default()
            };
            let e = evolve(&t, &params, &setup, seed)?;
            if let Some(path) = history {
                let mut h = String::from("generation,best_loss\n");
                for (g, l) in e.history.iter().enumerate() {
                    h.push_str(&format!("{},{l:?}\n", g + 1));
                }
                std::fs::write(path, h)?;
            }
            writeln!(out, "{}", e.best.config)?;
            writeln!(out, "loss {:?}", e.best.loss())?;
        }
        Command::GenDataset {
            out: dir,
            spec,
            seed,
            setup,
            with_raw,
        } => {
            let spec = match spec {
                SpecChoice::Full => SplitSpec::full(),
                SpecChoice::Reduced => SplitSpec::reduced(),
            };
            let opts = GenerateOptions {
                setup: setup.setup(),
                with_raw,
                ..GenerateOptions::default()
            };
            let m = dataset::generate(&dir, &spec, seed, &opts)?;
            for (split, n) in &m.counts {
                writeln!(out, "{} {n}", split.name())?;
            }
        }
        Command::Train(args) => run_train(args, &mut out)?,
        Command::Predict {
            model,
            spectrum,
            refine,
            setup,
        } => {
            let (_, m) = checkpoint::load(&model)?;
            let s = spectrum_io::load(&spectrum)?;
            let opts = RefineOptions::default();
            let p = predict(&m, &s, &setup.setup(), refine.then_some(&opts), &ValueGrid::default())?;
            writeln!(out, "{}", p.config)?;
            if let Some(r) = p.refinement {
                writeln!(out, "{}", json(&r)?)?;
            }
        }
        Command::Eval {
            model,
            dataset: dir,
            split,
            positional,
        } => {
            let (_, m) = checkpoint::load(&model)?;
            let split = match split {
                SplitChoice::Train => Split::Train,
                SplitChoice::Val => Split::Val,
                SplitChoice::Test => Split::Test,
            };
            let records = dataset::load_split(&dir, split)?;
            let grid = ValueGrid::default();
            let mode = if positional {
                MatchMode::Positional
            } else {
                MatchMode::Canonical
            };
            let table = evaluate(
                &records,
                |r| &r.config,
                |r| {
                    let x: Vec<f32> = r.normalized.as_slice().iter().map(|&v| v as f32).collect();
                    decode_normalized(&m, &x, &grid).ok().map(|(c, _)| c)
                },
                &grid,
                mode,
            )?;
            write!(out, "{}", table.to_csv())?;
            if table.failures > 0 {
                eprintln!("{} predictions failed and count as wrong", table.failures);
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn json<T: serde::Serialize>(v: &T) -> Result<String, Failure> {
    serde_json::to_string(v).map_err(|e| Failure {
        code: 2,
        message: e.to_string(),
    })
}

fn run_train(a: TrainArgs, out: &mut impl Write) -> Outcome {
    let grid = ValueGrid::default();
    let load = |dir: &Path, split| -> Result<_, Failure> { Ok(dataset::load_split(dir, split)?) };
    let mut records = load(&a.dataset, Split::Train)?;
    if let Some(n) = a.train_limit {
        records = dataset::subsample(&records, n, a.seed);
    }
    let train_set = samples_of(&records, &grid)?;
    let val_set = samples_of(&load(&a.dataset, Split::Val)?, &grid)?;
    let dims = match a.dims {
        DimsChoice::Full => Dims::full(),
        DimsChoice::Desk => Dims::desk(),
    };
    let config = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        teacher_forcing: a.teacher_forcing,
        batch: a.batch,
        clip: a.clip,
        seed: a.seed,
    };
    let mut model = Model::<f32>::new(dims, a.mode, a.seed)?;
    eprintln!(
        "mode {} N_w {} parameters {} train {} val {} {}",
        a.mode,
        model.arch.n_w(),
        model.arch.n_params(),
        train_set.len(),
        val_set.len(),
        json(&config)?
    );
    let log = train(&mut model, &train_set, &val_set, &config, |e| {
        eprintln!(
            "epoch {} train {:.4} val_partial {:.4} val_token_acc {:.3}",
            e.epoch, e.train_loss, e.val_partial, e.val_token_acc
        );
    })?;
    let mut header = Header::for_model(&model, a.seed, log.best_epoch, log.best_val_partial);
    header.train = Some(config);
    checkpoint::save(&a.out, &header, &model.theta)?;
    if let Some(path) = a.log {
        std::fs::write(path, json(&log)?)?;
    }
    writeln!(out, "best epoch {} val_partial {:?}", log.best_epoch, log.best_val_partial)?;
    Ok(())
}
