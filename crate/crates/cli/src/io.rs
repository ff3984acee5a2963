use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::failure::{Failure, Status};

pub const MANIFEST_NAME: &str = "manifest.toml";

/// Expands inputs into manifest paths.
///
/// A file is taken as a manifest. A directory holding `manifest.toml` is one
/// recording; any other directory contributes each immediate subdirectory that
/// holds one, in name order.
pub fn manifests(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for input in inputs {
        if !input.exists() {
            return Err(Failure::usage(format!(
                "no such file or directory: {}",
                input.display()
            )));
        }
        if input.is_file() {
            out.push(input.clone());
            continue;
        }
        let direct = input.join(MANIFEST_NAME);
        if direct.is_file() {
            out.push(direct);
            continue;
        }
        let found: Vec<PathBuf> = sorted_entries(input)?
            .into_iter()
            .map(|d| d.join(MANIFEST_NAME))
            .filter(|m| m.is_file())
            .collect();
        if found.is_empty() {
            return Err(Failure::usage(format!(
                "no {MANIFEST_NAME} found under {}",
                input.display()
            )));
        }
        out.extend(found);
    }
    Ok(out)
}

/// Expands inputs into report JSON files: files as given, directories by their
/// `*.json` entries, looking inside a `reports/` subdirectory when present.
pub fn reports(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for input in inputs {
        if !input.exists() {
            return Err(Failure::usage(format!(
                "no such file or directory: {}",
                input.display()
            )));
        }
        if input.is_file() {
            out.push(input.clone());
            continue;
        }
        let dir = if input.join("reports").is_dir() {
            input.join("reports")
        } else {
            input.clone()
        };
        let found: Vec<PathBuf> = sorted_entries(&dir)?
            .into_iter()
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
            .collect();
        if found.is_empty() {
            return Err(Failure::usage(format!(
                "no report files found under {}",
                input.display()
            )));
        }
        out.extend(found);
    }
    Ok(out)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Failure::io(dir, e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::io(dir, e))?;
    entries.sort();
    Ok(entries)
}

pub fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Failure::usage(format!("no such file: {}", path.display()))
        } else {
            Failure::io(path, e)
        }
    })
}

/// Writes through a temporary file in the same directory, then renames, so
/// readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Failure::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Failure::io(path, e))?;
    tmp.persist(path).map_err(|e| Failure::io(path, e.error))?;
    Ok(())
}

/// File stems derived from subject ids, made unique in input order.
pub fn unique_stems<'a>(ids: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    ids.into_iter()
        .map(|id| {
            let base: String = id
                .chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                        c
                    } else {
                        '_'
                    }
                })
                .collect();
            let base = if base.is_empty() {
                "recording".to_string()
            } else {
                base
            };
            let mut stem = base.clone();
            let mut k = 2;
            while !seen.insert(stem.clone()) {
                stem = format!("{base}-{k}");
                k += 1;
            }
            stem
        })
        .collect()
}

/// One fatal per-input error for the diagnostics file.
pub struct Diagnostic {
    pub input: PathBuf,
    pub failure: Failure,
}

/// Writes `diagnostics.txt` when there are failures and removes a stale one otherwise.
pub fn write_diagnostics(out: &Path, diags: &[Diagnostic]) -> Result<Status, Failure> {
    let path = out.join("diagnostics.txt");
    if diags.is_empty() {
        if path.exists() {
            fs::remove_file(&path).map_err(|e| Failure::io(&path, e))?;
        }
        return Ok(Status::Ok);
    }
    let mut text = String::new();
    for d in diags {
        log::error!("{}: {}", d.input.display(), d.failure);
        text.push_str(&format!(
            "{}\texit {}\t{}\n",
            d.input.display(),
            d.failure.status.code(),
            d.failure.message
        ));
    }
    write_atomic(&path, text.as_bytes())?;
    Ok(diags
        .iter()
        .map(|d| d.failure.status)
        .max()
        .unwrap_or(Status::Ok))
}

pub fn worker_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Failure::usage("--jobs must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Failure::usage(format!("cannot start worker pool: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stems_are_unique_and_safe() {
        let stems = unique_stems(["s01", "s01", "a b/c", ""]);
        assert_eq!(stems, ["s01", "s01-2", "a_b_c", "recording"]);
    }
}
