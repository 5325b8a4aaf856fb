//! Phantom directories: `<name>.vtv` volume, `<name>.vtc` reference
//! centerlines, `<name>.spec` generator input and `<name>.ostia` ostium list.

use std::fs;
use std::path::{Path, PathBuf};

use vtrack::phantom::{rasterize, spec_to_text, NamedPhantom};
use vtrack::training::{read_centerlines, write_centerlines, BranchRefs};
use vtrack::volume::{read_volume, write_volume, Volume};
use vtrack::{Error, Result, Vec3};

use vtrack::format::fmt_f64;

pub struct PhantomData {
    pub name: String,
    pub volume: Volume,
    pub refs: BranchRefs,
    pub ostia: Vec<Vec3>,
}

fn io(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io(path, e))
}

/// Suite part of a phantom name (`curved-03` → `curved`).
pub fn suite_of(name: &str) -> &str {
    name.rsplit_once('-').map_or(name, |(s, _)| s)
}

/// Rasterize and write one phantom.
pub fn write_phantom(dir: &Path, p: &NamedPhantom) -> Result<()> {
    let ph = rasterize(&p.spec)?;
    write_volume(&ph.volume, &dir.join(format!("{}.vtv", p.name)))?;
    write_centerlines(&ph.refs, &dir.join(format!("{}.vtc", p.name)))?;
    write_text(
        &dir.join(format!("{}.spec", p.name)),
        &spec_to_text(&p.spec),
    )?;
    write_ostia(&dir.join(format!("{}.ostia", p.name)), &ph.ostia)
}

pub fn write_ostia(path: &Path, ostia: &[Vec3]) -> Result<()> {
    let mut s = String::new();
    for o in ostia {
        s.push_str(&format!(
            "ostium {} {} {}\n",
            fmt_f64(o.x),
            fmt_f64(o.y),
            fmt_f64(o.z)
        ));
    }
    write_text(path, &s)
}

pub fn read_ostia(path: &Path) -> Result<Vec<Vec3>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for line in text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
    {
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::Header {
            format: "ostia",
            reason: format!("bad line `{line}`"),
        };
        if f.len() != 4 || f[0] != "ostium" {
            return Err(bad());
        }
        let v: Vec<f64> = f[1..]
            .iter()
            .map(|t| t.parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        out.push(Vec3::new(v[0], v[1], v[2]));
    }
    Ok(out)
}

/// Names of the phantoms in `dir` (those with both a volume and references),
/// sorted, optionally restricted to the given suites.
pub fn list_phantoms(dir: &Path, suites: Option<&[String]>) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io(dir, e))? {
        let path = entry.map_err(|e| io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("vtv") {
            continue;
        }
        let Some(name) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if !dir.join(format!("{name}.vtc")).exists() {
            continue;
        }
        if let Some(s) = suites {
            if !s.iter().any(|x| x == suite_of(name)) {
                continue;
            }
        }
        names.push(name.to_string());
    }
    names.sort();
    if names.is_empty() {
        return Err(Error::Invalid(format!(
            "no phantoms (matching .vtv/.vtc pairs) in {}",
            dir.display()
        )));
    }
    Ok(names)
}

pub fn load_phantom(dir: &Path, name: &str) -> Result<PhantomData> {
    let ostia_path = dir.join(format!("{name}.ostia"));
    Ok(PhantomData {
        name: name.to_string(),
        volume: read_volume(&dir.join(format!("{name}.vtv")))?,
        refs: read_centerlines(&dir.join(format!("{name}.vtc")))?,
        ostia: if ostia_path.exists() {
            read_ostia(&ostia_path)?
        } else {
            Vec::new()
        },
    })
}

pub fn load_refs(dir: &Path, name: &str) -> Result<(BranchRefs, Vec<Vec3>)> {
    let ostia_path = dir.join(format!("{name}.ostia"));
    let ostia = if ostia_path.exists() {
        read_ostia(&ostia_path)?
    } else {
        Vec::new()
    };
    Ok((read_centerlines(&dir.join(format!("{name}.vtc")))?, ostia))
}

/// File holding the track of branch `id` of phantom `name`.
pub fn vessel_file(dir: &Path, name: &str, id: u32) -> PathBuf {
    dir.join(format!("{name}__b{id}.vte"))
}

/// Directory holding the extracted tree of phantom `name`.
pub fn tree_dir(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
