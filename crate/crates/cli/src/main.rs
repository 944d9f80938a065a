use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use log::info;
use spsvc::pipeline::{
    compare_csv, compare_methods, compare_table, export_graph, lift_label_file, run_pipeline, sweep_compression,
    sweep_csv, Method, PipelineConfig,
};
use spsvc::Error;

/// Config keys that may be given as bare switches.
const SWITCHES: &[&str] = &["labels", "header", "standardize", "assign-outliers"];

fn config_args() -> Vec<Arg> {
    let mut args = vec![Arg::new("config")
        .long("config")
        .value_name("FILE")
        .value_parser(clap::value_parser!(PathBuf))
        .help("flat key = value file; command-line flags take precedence")];
    for &key in PipelineConfig::KEYS {
        let mut arg = Arg::new(key).long(key).value_name("VALUE").action(ArgAction::Set);
        if SWITCHES.contains(&key) {
            arg = arg.num_args(0..=1).default_missing_value("true").value_name("BOOL");
        }
        args.push(arg);
    }
    args
}

fn cli() -> Command {
    Command::new("spsvc")
        .about("Support vector clustering with spectrum-preserving compression")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(Command::new("run").about("cluster one dataset").args(config_args()))
        .subcommand(
            Command::new("sweep")
                .about("run the compressed pipeline at several ratios")
                .args(config_args())
                .arg(Arg::new("ratios").long("ratios").value_name("LIST").required(true).help("comma-separated, e.g. 2,5,10"))
                .arg(Arg::new("out").long("out").value_name("CSV").value_parser(clap::value_parser!(PathBuf))),
        )
        .subcommand(
            Command::new("compare")
                .about("run several methods on the same data")
                .args(config_args())
                .arg(Arg::new("methods").long("methods").value_name("LIST").help("comma-separated; default all"))
                .arg(Arg::new("out").long("out").value_name("CSV").value_parser(clap::value_parser!(PathBuf))),
        )
        .subcommand(
            Command::new("lift")
                .about("lift coarse labels to the original points through a saved map")
                .arg(path_arg("map", true))
                .arg(path_arg("labels", true))
                .arg(path_arg("out", true)),
        )
        .subcommand(
            Command::new("export-graph")
                .about("write the k-NN graph as a weighted edge list")
                .args(config_args())
                .arg(path_arg("out", true)),
        )
}

fn path_arg(name: &'static str, required: bool) -> Arg {
    Arg::new(name)
        .long(name)
        .value_name("PATH")
        .required(required)
        .value_parser(clap::value_parser!(PathBuf))
}

fn build_config(m: &ArgMatches) -> Result<PipelineConfig, Error> {
    let mut cfg = PipelineConfig::default();
    if let Some(file) = m.get_one::<PathBuf>("config") {
        cfg.apply_file(file)?;
    }
    for &key in PipelineConfig::KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_list<T: std::str::FromStr>(what: &str, list: &str) -> Result<Vec<T>, Error>
where
    T::Err: std::fmt::Display,
{
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| Error::Config(format!("{what}: {s:?}: {e}"))))
        .collect()
}

/// Writes `text` to `out`, or stdout when absent.
fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dispatch(matches: &ArgMatches) -> Result<(), Error> {
    match matches.subcommand() {
        Some(("run", m)) => {
            let out = run_pipeline(&build_config(m)?)?;
            let r = &out.report;
            let nmi = r.nmi.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            println!(
                "{}: {} points, {} clusters, {} outliers, NMI {nmi}, {:.3}s",
                r.method, r.n_points, r.cluster_count, r.outlier_count, r.timings.total
            );
        }
        Some(("sweep", m)) => {
            let cfg = build_config(m)?;
            let ratios: Vec<f64> = parse_list("ratios", m.get_one::<String>("ratios").expect("required"))?;
            if ratios.is_empty() {
                return Err(Error::Config("ratios: empty list".into()));
            }
            let rows = sweep_compression(&cfg, &ratios)?;
            emit(&sweep_csv(&rows), m.get_one("out"))?;
        }
        Some(("compare", m)) => {
            let cfg = build_config(m)?;
            let methods: Vec<Method> = match m.get_one::<String>("methods") {
                Some(list) => parse_list("methods", list)?,
                None => Method::ALL.to_vec(),
            };
            let rows = compare_methods(&cfg, &methods)?;
            match m.get_one::<PathBuf>("out") {
                Some(path) => {
                    emit(&compare_csv(&rows), Some(path))?;
                    print!("{}", compare_table(&rows));
                }
                None => print!("{}", compare_table(&rows)),
            }
        }
        Some(("lift", m)) => {
            let get = |k| m.get_one::<PathBuf>(k).expect("required");
            let n = lift_label_file(get("map"), get("labels"), get("out"))?;
            info!("lifted labels to {n} points");
        }
        Some(("export-graph", m)) => {
            let cfg = build_config(m)?;
            let n = export_graph(&cfg, m.get_one::<PathBuf>("out").expect("required"))?;
            info!("wrote {n} edges");
        }
        _ => unreachable!("subcommand_required"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}
