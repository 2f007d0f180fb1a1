//! File layout of a run directory and the CSV formats written into it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use angio_core::{Tip, Vec2};
use serde::{de::DeserializeOwned, Serialize};

/// Environment variable naming the default output root.
pub const ENV_OUT: &str = "ANGIO_OUT";
pub const DEFAULT_OUT: &str = "angio-out";

pub const MANIFEST: &str = "manifest.json";
pub const PARTIAL_MARKER: &str = "run.partial";
pub const REALIZATIONS_DIR: &str = "realizations";
pub const MOMENTS_DIR: &str = "moments";
pub const FIT_DIR: &str = "fit";
pub const THEORY_DIR: &str = "theory";
pub const REPORT_DIR: &str = "report";

pub const SNAPSHOT_HEADER: &str = "t,tip_id,x,y,vx,vy,alive";

/// `--out`, else `$ANGIO_OUT`, else `./angio-out`.
pub fn resolve_out(flag: Option<&Path>) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(ENV_OUT)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
    }
}

/// Writes through a temporary sibling and renames, so readers never see a
/// half-written file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Comment lines that open every CSV.
pub fn provenance_comments(config_hash: &str, seed: u64) -> String {
    format!("# config_hash={config_hash}\n# seed={seed}\n")
}

pub fn realization_path(out: &Path, omega: u64) -> PathBuf {
    out.join(REALIZATIONS_DIR).join(format!("r{omega:05}.csv"))
}

/// "16h", "20.5h": file-name friendly snapshot label.
pub fn hours_label(hours: f64) -> String {
    format!("{hours}h")
}

/// Tip rows of several snapshots, `t` in hours.
pub fn snapshot_csv(config_hash: &str, seed: u64, omega: u64, snapshots: &[(f64, &[Tip])]) -> String {
    let mut s = provenance_comments(config_hash, seed);
    let _ = writeln!(s, "# realization={omega}");
    s.push_str(SNAPSHOT_HEADER);
    s.push('\n');
    for (t, tips) in snapshots {
        for tip in tips.iter() {
            let _ = writeln!(
                s,
                "{t},{},{},{},{},{},{}",
                tip.id,
                tip.pos.x,
                tip.pos.y,
                tip.vel.x,
                tip.vel.y,
                u8::from(tip.alive)
            );
        }
    }
    s
}

/// Parsed realization file.
#[derive(Debug, Clone)]
pub struct RealizationFile {
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    /// (t in hours, tips) in file order.
    pub snapshots: Vec<(f64, Vec<Tip>)>,
}

impl RealizationFile {
    pub fn tips_at(&self, hours: f64) -> Option<&[Tip]> {
        self.snapshots
            .iter()
            .find(|(t, _)| (t - hours).abs() < 1e-9)
            .map(|(_, tips)| tips.as_slice())
    }
}

fn comment_value<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    line.strip_prefix('#')?.trim().strip_prefix(key)?.strip_prefix('=')
}

pub fn parse_snapshot_csv(text: &str) -> Result<RealizationFile> {
    let mut out = RealizationFile {
        config_hash: None,
        seed: None,
        snapshots: Vec::new(),
    };
    let mut header_seen = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(h) = comment_value(line, "config_hash") {
                out.config_hash = Some(h.to_string());
            }
            if let Some(s) = comment_value(line, "seed") {
                out.seed = s.parse().ok();
            }
            continue;
        }
        if !header_seen {
            if line != SNAPSHOT_HEADER {
                bail!("unexpected header '{line}', expected '{SNAPSHOT_HEADER}'");
            }
            header_seen = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            bail!("line {}: expected 7 fields, got {}", lineno + 1, f.len());
        }
        let num = |k: usize| -> Result<f64> {
            f[k].parse::<f64>()
                .map_err(|_| anyhow!("line {}: bad number '{}'", lineno + 1, f[k]))
        };
        let t = num(0)?;
        let tip = Tip {
            id: f[1].parse().map_err(|_| anyhow!("line {}: bad tip id", lineno + 1))?,
            pos: Vec2::new(num(2)?, num(3)?),
            vel: Vec2::new(num(4)?, num(5)?),
            birth_time: 0.0,
            alive: match f[6] {
                "1" => true,
                "0" => false,
                other => bail!("line {}: alive must be 0 or 1, got '{other}'", lineno + 1),
            },
            parent_id: None,
        };
        match out.snapshots.last_mut() {
            Some((last_t, tips)) if *last_t == t => tips.push(tip),
            _ => out.snapshots.push((t, vec![tip])),
        }
    }
    if !header_seen {
        bail!("missing header line");
    }
    Ok(out)
}

/// Two-column "xi,value" profile with provenance comments.
pub fn profile_csv(comments: &str, xs: &[f64], values: &[f64]) -> String {
    let mut s = comments.to_string();
    s.push_str("xi,value\n");
    for (x, v) in xs.iter().zip(values) {
        let _ = writeln!(s, "{x},{v}");
    }
    s
}

pub fn parse_profile_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    let mut header = false;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        if !header {
            if line != "xi,value" {
                bail!("unexpected header '{line}', expected 'xi,value'");
            }
            header = true;
            continue;
        }
        let (a, b) = line.split_once(',').ok_or_else(|| anyhow!("bad row '{line}'"))?;
        xs.push(a.parse()?);
        vs.push(b.parse()?);
    }
    Ok((xs, vs))
}
