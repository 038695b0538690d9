//! `nsgc run` / `nsgc compare`: train with compressed gradient exchange and
//! write per-step CSV, a JSON summary and comparison tables.

use clap::{Arg, ArgAction, ArgMatches, Command};
use nsgc_core::experiment::{self, ExperimentConfig, KEYS};
use nsgc_core::{CompressorKind, Error};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_ERROR: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

fn common_args(cmd: Command) -> Command {
    let cmd = cmd
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("PATH")
                .action(ArgAction::Append)
                .help("Config file (key = value lines)"),
        )
        .arg(Arg::new("out").long("out").value_name("DIR").help("Output directory"))
        .arg(Arg::new("seed").long("seed").value_name("INT").help("Master seed"))
        .arg(
            Arg::new("threads")
                .long("threads")
                .value_name("N")
                .value_parser(clap::value_parser!(usize))
                .help("Worker threads for node-local compute (results do not depend on it)"),
        );
    override_keys().fold(cmd, |cmd, key| {
        cmd.arg(
            Arg::new(key)
                .long(key)
                .value_name("VALUE")
                .help_heading("Config overrides"),
        )
    })
}

/// Config keys exposed as `--KEY` flags; the output path and seed have their own.
fn override_keys() -> impl Iterator<Item = &'static str> {
    KEYS.iter()
        .copied()
        .filter(|k| !matches!(*k, "output_path" | "master_seed"))
}

fn cli() -> Command {
    Command::new("nsgc")
        .about("Neighborhood-statistics gradient compression experiments")
        .subcommand_required(true)
        .subcommand(common_args(Command::new("run").about("Train one configuration")))
        .subcommand(
            common_args(Command::new("compare").about("Train several configurations and tabulate them")).arg(
                Arg::new("compressors")
                    .long("compressors")
                    .value_name("LIST")
                    .help("Comma-separated compressors to run on top of a single --config"),
            ),
        )
}

fn load(path: Option<&Path>, m: &ArgMatches) -> Result<ExperimentConfig, Error> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config {
                key: "config".into(),
                reason: format!("{}: {e}", p.display()),
            })?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    for key in override_keys() {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    if let Some(seed) = m.get_one::<String>("seed") {
        cfg.set("master_seed", seed)?;
    }
    if let Some(out) = m.get_one::<String>("out") {
        cfg.output_path = PathBuf::from(out);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_cmd(m: &ArgMatches) -> Result<(), Error> {
    let paths: Vec<PathBuf> = m
        .get_many::<String>("config")
        .into_iter()
        .flatten()
        .map(PathBuf::from)
        .collect();
    if paths.len() > 1 {
        return Err(Error::Config {
            key: "config".into(),
            reason: "run takes a single --config".into(),
        });
    }
    let cfg = load(paths.first().map(PathBuf::as_path), m)?;
    let result = experiment::run(&cfg)?;
    result.write_to(&cfg.output_path)?;
    let s = &result.summary;
    println!(
        "{}: test acc {:.4}, train acc {:.4}, {} bytes, ratio {:.2}x -> {}",
        cfg.compressor,
        s.final_test_acc,
        s.final_train_acc,
        s.cumulative_bytes,
        s.compression_ratio,
        cfg.output_path.display()
    );
    Ok(())
}

fn compare_cmd(m: &ArgMatches) -> Result<(), Error> {
    let paths: Vec<PathBuf> = m
        .get_many::<String>("config")
        .into_iter()
        .flatten()
        .map(PathBuf::from)
        .collect();
    let mut configs = if paths.is_empty() {
        vec![load(None, m)?]
    } else {
        paths.iter().map(|p| load(Some(p), m)).collect::<Result<Vec<_>, _>>()?
    };
    if let Some(list) = m.get_one::<String>("compressors") {
        if configs.len() != 1 {
            return Err(Error::Config {
                key: "compressors".into(),
                reason: "--compressors expands exactly one base config".into(),
            });
        }
        let base = configs.pop().unwrap();
        for name in list.split(',') {
            let mut c = base.clone();
            c.compressor = name.trim().parse::<CompressorKind>().map_err(|reason| Error::Config {
                key: "compressors".into(),
                reason,
            })?;
            configs.push(c);
        }
    }
    let out = configs[0].output_path.clone();
    let table = experiment::compare(&configs)?;
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("comparison.csv"), table.csv())?;
    for (i, (row, res)) in table.rows.iter().zip(&table.results).enumerate() {
        res.write_to(&out.join(format!("{i:02}_{}", row.method)))?;
    }
    print!("{}", table.csv());
    Ok(())
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand required");
    if let Some(&n) = sub.get_one::<usize>("threads") {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    }
    let result = match name {
        "run" => run_cmd(sub),
        "compare" => compare_cmd(sub),
        _ => unreachable!("clap rejects unknown subcommands"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config { .. } | Error::InvalidArgument(_) => EXIT_CONFIG,
                Error::DivergedLoss { .. } => EXIT_DIVERGED,
                _ => EXIT_ERROR,
            })
        }
    }
}
