//! `run.cfg` echoes: the working directory and the exact argument list of a
//! run, one token per line, so `vtrack rerun` can repeat it.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use vtrack::{Error, Result};

pub const FILE_NAME: &str = "run.cfg";
const MAGIC: &str = "VTRUN1";

pub struct RunConfig {
    pub cwd: PathBuf,
    pub args: Vec<String>,
}

fn header(reason: impl Into<String>) -> Error {
    Error::Header {
        format: MAGIC,
        reason: reason.into(),
    }
}

pub fn write(path: &Path, cwd: &Path, argv: &[OsString]) -> Result<()> {
    let mut s = format!("{MAGIC}\ncwd {}\n", cwd.display());
    for a in argv {
        let a = a
            .to_str()
            .ok_or_else(|| Error::Invalid(format!("argument {a:?} is not valid UTF-8")))?;
        if a.contains('\n') {
            return Err(Error::Invalid("arguments cannot contain newlines".into()));
        }
        s.push_str(&format!("arg {a}\n"));
    }
    crate::data::write_text(path, &s)
}

pub fn read(path: &Path) -> Result<RunConfig> {
    let text = crate::data::read_text(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(header("missing magic line"));
    }
    let cwd = lines
        .next()
        .and_then(|l| l.strip_prefix("cwd "))
        .ok_or_else(|| header("missing cwd line"))?;
    let args = lines
        .map(|l| {
            l.strip_prefix("arg ")
                .map(str::to_string)
                .ok_or_else(|| header(format!("bad line `{l}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if args.len() < 2 {
        return Err(header("no command recorded"));
    }
    Ok(RunConfig {
        cwd: PathBuf::from(cwd),
        args,
    })
}
