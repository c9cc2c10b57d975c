//! Write-once run directories.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

pub const MANIFEST: &str = "manifest.json";
pub const RESULTS: &str = "results.jsonl";

#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    written: Vec<String>,
}

impl RunDir {
    /// Create `root`; an existing non-empty directory is refused so that no
    /// run overwrites another's outputs.
    pub fn create(root: &Path) -> io::Result<Self> {
        if root.exists() {
            if !root.is_dir() || fs::read_dir(root)?.next().is_some() {
                return Err(io::Error::new(
                    io::ErrorKind::AlreadyExists,
                    format!("{} already holds a run; outputs are write-once", root.display()),
                ));
            }
        } else {
            fs::create_dir_all(root)?;
        }
        Ok(RunDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Names of the files written so far, in order.
    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn create_file(&mut self, name: &str) -> io::Result<BufWriter<File>> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let f = OpenOptions::new().write(true).create_new(true).open(&path)?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    pub fn write_lines(&mut self, name: &str, lines: &[String]) -> io::Result<()> {
        let mut w = self.create_file(name)?;
        for l in lines {
            writeln!(w, "{l}")?;
        }
        w.flush()
    }

    /// A fresh sub-directory for nested runs.
    pub fn scratch(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

/// Files of a run directory, relative and sorted, excluding manifests (which
/// carry wall-clock time).
pub fn comparable_files(root: &Path) -> io::Result<Vec<PathBuf>> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let p = entry?.path();
            if p.is_dir() {
                walk(base, &p, out)?;
            } else if p.file_name().is_some_and(|n| n != MANIFEST) {
                out.push(p.strip_prefix(base).expect("walk stays below base").to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, root, &mut out)?;
    out.sort();
    Ok(out)
}

/// Whether two run directories hold byte-identical outputs.
pub fn same_outputs(a: &Path, b: &Path) -> io::Result<bool> {
    let (fa, fb) = (comparable_files(a)?, comparable_files(b)?);
    if fa != fb || fa.is_empty() {
        return Ok(false);
    }
    for f in &fa {
        if fs::read(a.join(f))? != fs::read(b.join(f))? {
            return Ok(false);
        }
    }
    Ok(true)
}
