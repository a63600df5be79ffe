use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Arg, ArgAction, ArgMatches, Args, Command, FromArgMatches, Parser, Subcommand};
use log::info;

use uqfair::audit::{
    emit_report, emit_sweep, evaluate, read_config_entries, read_report, render_markdown,
    render_sweep_markdown, run_audit, run_sweep, AuditConfig, AuditResult, DataSource,
    ReportFormat, TrainedModel, KEYS,
};
use uqfair::checkpoint::Checkpoint;
use uqfair::tabular::TabularDataset;

#[derive(Parser)]
#[command(name = "uqfair", version, about = "Uncertainty-aware fairness audits of tabular classifiers")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write train/test CSVs for every seed of the configured data source.
    Generate(Settings),
    /// Train one model per seed and save checkpoints.
    Train {
        #[command(flatten)]
        settings: Settings,
        /// Train on this CSV (x0..,y,g layout) instead of the configured source.
        #[arg(long)]
        train_csv: Option<PathBuf>,
    },
    /// Run the full audit and write reports.
    Audit {
        #[command(flatten)]
        settings: Settings,
        /// Report formats, comma-separated: json, csv, markdown.
        #[arg(long, default_value = "json,csv,markdown")]
        format: String,
        /// Evaluate this saved model instead of training (needs --test-csv).
        #[arg(long, requires = "test_csv")]
        checkpoint: Option<PathBuf>,
        /// Test rows (x0..,y,g layout) for --checkpoint.
        #[arg(long, requires = "checkpoint")]
        test_csv: Option<PathBuf>,
    },
    /// One audit per hidden-layer width, with the ordering table.
    Sweep {
        #[command(flatten)]
        settings: Settings,
        /// Hidden-layer widths, comma-separated.
        #[arg(long, default_value = "10,50,100,200")]
        widths: String,
        #[arg(long, default_value = "json,csv,markdown")]
        format: String,
    },
    /// Re-render a saved report.json.
    Report {
        /// Path of a report.json written by `audit`.
        input: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: String,
        /// Output directory; prints markdown to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// `--config FILE` plus one flag per config key, named after the key.
struct Settings {
    config: Option<PathBuf>,
    overrides: Vec<(String, String)>,
}

fn flag_name(key: &str) -> &'static str {
    Box::leak(key.replace('_', "-").into_boxed_str())
}

impl Args for Settings {
    fn augment_args(cmd: Command) -> Command {
        let cmd = cmd.arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("TOML config file; flags override its values"),
        );
        KEYS.iter().fold(cmd, |cmd, (section, key, desc)| {
            let long = flag_name(key);
            let mut arg = Arg::new(*key)
                .long(long)
                .value_name("VALUE")
                .help(*desc)
                .help_heading(match *section {
                    "data" => "Data",
                    "model" => "Model",
                    "audit" => "Audit",
                    _ => "Output",
                });
            if long != *key {
                arg = arg.alias(*key);
            }
            cmd.arg(arg)
        })
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}

impl FromArgMatches for Settings {
    fn from_arg_matches(m: &ArgMatches) -> std::result::Result<Self, clap::Error> {
        let mut keyed: Vec<(usize, String, String)> = KEYS
            .iter()
            .filter_map(|(_, key, _)| {
                let v = m.get_one::<String>(key)?;
                let pos = m.index_of(key).unwrap_or(0);
                Some((pos, key.to_string(), v.clone()))
            })
            .collect();
        keyed.sort_by_key(|(pos, _, _)| *pos);
        Ok(Self {
            config: m.get_one::<PathBuf>("config").cloned(),
            overrides: keyed.into_iter().map(|(_, k, v)| (k, v)).collect(),
        })
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> std::result::Result<(), clap::Error> {
        *self = Self::from_arg_matches(m)?;
        Ok(())
    }
}

impl Settings {
    fn resolve(&self) -> Result<AuditConfig> {
        let mut entries = match &self.config {
            Some(p) => read_config_entries(p)?,
            None => Vec::new(),
        };
        // A source flag replaces whichever source the file named.
        let sources = ["scenario", "components", "csv"];
        if self.overrides.iter().any(|(k, _)| sources.contains(&k.as_str())) {
            entries.retain(|(k, _)| !sources.contains(&k.as_str()));
        }
        entries.extend(self.overrides.iter().cloned());
        Ok(AuditConfig::from_entries(&entries)?)
    }

    /// Evaluation settings for a saved model: the data source is irrelevant,
    /// so a placeholder scenario satisfies validation and is then cleared.
    fn resolve_without_source(&self) -> Result<AuditConfig> {
        let with_source = Settings {
            config: self.config.clone(),
            overrides: self
                .overrides
                .iter()
                .cloned()
                .chain([("scenario".to_string(), "sd1".to_string())])
                .collect(),
        };
        let mut cfg = with_source.resolve()?;
        cfg.scenario = None;
        Ok(cfg)
    }
}

fn parse_formats(s: &str) -> Result<Vec<ReportFormat>> {
    let formats = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(str::parse)
        .collect::<uqfair::error::Result<Vec<ReportFormat>>>()?;
    if formats.is_empty() {
        bail!("no report format given");
    }
    Ok(formats)
}

fn parse_widths(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .with_context(|| format!("width {t:?} is not a non-negative integer"))
        })
        .collect()
}

fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn generate(cfg: &AuditConfig) -> Result<()> {
    let source = DataSource::resolve(cfg)?;
    create_dir(&cfg.out_dir)?;
    let stem = slug(&cfg.source_name());
    for &seed in &cfg.seeds {
        let (train, test) = source.split(cfg, seed)?;
        for (part, ds) in [("train", &train), ("test", &test)] {
            let path = cfg.out_dir.join(format!("{stem}_seed{seed}_{part}.csv"));
            ds.write_csv(&path)?;
            println!("{} ({} rows)", path.display(), ds.len());
        }
    }
    Ok(())
}

fn train(cfg: &AuditConfig, train_csv: Option<&Path>) -> Result<()> {
    let fixed = train_csv.map(TabularDataset::read_csv).transpose()?;
    let source = match fixed {
        Some(_) => None,
        None => Some(DataSource::resolve(cfg)?),
    };
    create_dir(&cfg.out_dir)?;
    for &seed in &cfg.seeds {
        let data = match (&fixed, &source) {
            (Some(ds), _) => ds.clone(),
            (_, Some(src)) => src.split(cfg, seed)?.0,
            (None, None) => unreachable!("source resolved when no CSV is given"),
        };
        let model = TrainedModel::train(cfg, &data, seed)?;
        let path = cfg.out_dir.join(format!("model_seed{seed}.ckpt"));
        model.to_checkpoint().save(&path)?;
        println!("{} ({} training rows)", path.display(), data.len());
    }
    Ok(())
}

fn write_result(result: &mut AuditResult, formats: &[ReportFormat], dir: &Path) -> Result<()> {
    let written = emit_report(result, formats, dir)
        .with_context(|| format!("writing reports to {}", dir.display()))?;
    print!("{}", render_markdown(result));
    for p in written {
        info!("wrote {}", p.display());
    }
    println!("\nreports in {}", dir.display());
    Ok(())
}

fn audit(cfg: &AuditConfig, formats: &[ReportFormat], saved: Option<(&Path, &Path)>) -> Result<()> {
    let mut result = match saved {
        None => run_audit(cfg)?,
        Some((ck, test_csv)) => {
            let model = TrainedModel::from_checkpoint(Checkpoint::load(ck)?)?;
            let test = TabularDataset::read_csv(test_csv)?;
            let seed = cfg.seeds[0];
            let r = evaluate(cfg, &model, &test, seed)?;
            let name = format!("{} on {}", ck.display(), test_csv.display());
            AuditResult::assemble(cfg, name, vec![r])
        }
    };
    write_result(&mut result, formats, &cfg.out_dir)
}

fn sweep(cfg: &AuditConfig, widths: &[usize], formats: &[ReportFormat]) -> Result<()> {
    let mut s = run_sweep(cfg, widths)?;
    emit_sweep(&mut s, formats, &cfg.out_dir)
        .with_context(|| format!("writing sweep to {}", cfg.out_dir.display()))?;
    print!("{}", render_sweep_markdown(&s));
    println!("\nreports in {}", cfg.out_dir.display());
    Ok(())
}

fn report(input: &Path, formats: &[ReportFormat], out: Option<&Path>) -> Result<()> {
    let mut r = read_report(input)?;
    match out {
        None => print!("{}", render_markdown(&r)),
        Some(dir) => {
            // Dumps belong to the original run; a re-render does not repeat them.
            r.config.dumps = false;
            for p in emit_report(&mut r, formats, dir)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Generate(s) => generate(&s.resolve()?),
        Cmd::Train { settings, train_csv } => {
            let cfg = match &train_csv {
                Some(_) => settings.resolve_without_source()?,
                None => settings.resolve()?,
            };
            train(&cfg, train_csv.as_deref())
        }
        Cmd::Audit {
            settings,
            format,
            checkpoint,
            test_csv,
        } => {
            let cfg = match &checkpoint {
                // A saved model needs no data source.
                Some(_) => settings.resolve_without_source()?,
                None => settings.resolve()?,
            };
            let saved = checkpoint.as_deref().zip(test_csv.as_deref());
            audit(&cfg, &parse_formats(&format)?, saved)
        }
        Cmd::Sweep {
            settings,
            widths,
            format,
        } => sweep(&settings.resolve()?, &parse_widths(&widths)?, &parse_formats(&format)?),
        Cmd::Report { input, format, out } => report(&input, &parse_formats(&format)?, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
