//! Library side of the `vtrack` command-line tool, usable from tests.

pub mod args;
pub mod commands;
pub mod data;
pub mod runcfg;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::Ctx;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    /// Bad command line (unknown flag, missing argument, unparsable value).
    Usage(String),
    Core(vtrack::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use vtrack::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => match e {
                E::Io { .. } | E::Header { .. } | E::Truncated { .. } | E::Version { .. } => {
                    EXIT_IO
                }
                E::Numeric(_) | E::NoTruePositives => EXIT_NUMERIC,
                E::Invalid(_)
                | E::Shape(_)
                | E::CodebookMismatch { .. }
                | E::TooFewOstia { .. } => EXIT_USAGE,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<vtrack::Error> for CliError {
    fn from(e: vtrack::Error) -> Self {
        CliError::Core(e)
    }
}

/// Parse `argv` (including the program name) and run it relative to `base`.
/// Returns the text destined for stdout.
pub fn run_in<I, T>(base: &Path, argv: I) -> Result<String, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            return Ok(e.to_string())
        }
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };
    let ctx = Ctx {
        base: base.to_path_buf(),
        verbose: cli.verbose,
    };
    if let Command::Rerun(r) = &cli.command {
        let cfg = runcfg::read(&ctx.path(&r.config))?;
        return run_in(&cfg.cwd, cfg.args);
    }
    let threads = cli.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} worker threads: {e}")))?;
    let echo = echo_path(&ctx, &cli.command);
    if let Some(dir) = echo.as_deref().and_then(Path::parent) {
        data::create_dir(dir)?;
    }
    let out = pool.install(|| dispatch(&ctx, &cli.command))?;
    if let Some(echo) = echo {
        runcfg::write(&echo, base, &argv)?;
    }
    Ok(out)
}

/// Run with paths relative to the current directory.
pub fn run<I, T>(argv: I) -> Result<String, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cwd = std::env::current_dir().map_err(|e| vtrack::Error::Io {
        path: PathBuf::from("."),
        source: e,
    })?;
    run_in(&cwd, argv)
}

fn dispatch(ctx: &Ctx, c: &Command) -> vtrack::Result<String> {
    match c {
        Command::Phantom(a) => commands::phantom(ctx, a),
        Command::Train(a) => commands::train(ctx, a),
        Command::Track(a) => commands::track_cmd(ctx, a),
        Command::TrackAll(a) => commands::track_all(ctx, a),
        Command::Autotrack(a) => commands::autotrack(ctx, a),
        Command::Eval(a) => commands::eval(ctx, a),
        Command::RadiusEval(a) => commands::radius_eval(ctx, a),
        Command::Rerun(_) => unreachable!("handled before dispatch"),
    }
}

/// `run.cfg` inside output directories, `<file>.run.cfg` beside output files.
fn echo_path(ctx: &Ctx, c: &Command) -> Option<PathBuf> {
    let beside = |p: &Path| {
        let p = ctx.path(p);
        let mut name = p.file_name().unwrap_or_default().to_os_string();
        name.push(".run.cfg");
        p.with_file_name(name)
    };
    match c {
        Command::Phantom(a) => Some(ctx.path(&a.out).join(runcfg::FILE_NAME)),
        Command::Train(a) => Some(beside(&a.out)),
        Command::Track(a) => Some(beside(&a.out)),
        Command::TrackAll(a) => Some(ctx.path(&a.out).join(runcfg::FILE_NAME)),
        Command::Autotrack(a) => Some(ctx.path(&a.out).join(runcfg::FILE_NAME)),
        Command::Eval(a) => a.out.as_deref().map(beside),
        Command::RadiusEval(a) => a.out.as_deref().map(beside),
        Command::Rerun(_) => None,
    }
}
