//! File plumbing: tensor and CSV ingestion, config resolution, and atomic
//! output writes (temp-then-rename, so interrupted runs never leave torn
//! files).

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use jackmac_sim::{parse_tensor, ArrayConfig, LoadedTensor, Tensor};

/// Write `bytes` to `path` atomically.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating a temp file next to {}", path.display()))?;
    tmp.write_all(bytes)?;
    tmp.persist(path)
        .map_err(|e| anyhow!("moving output into {}: {e}", path.display()))?;
    Ok(())
}

/// Load a coded tensor container.
pub fn load_coded(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_tensor(&bytes)?.into_coded()?)
}

/// Load real-valued input for quantization: either an f32 tensor container
/// or CSV text with one row per line.
pub fn load_real(path: &Path) -> Result<(Vec<u32>, Vec<f64>)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(b"JKT1") {
        match parse_tensor(&bytes)? {
            LoadedTensor::F32(t) => {
                let data = t.data.iter().map(|&v| v as f64).collect();
                Ok((t.dims, data))
            }
            LoadedTensor::Coded(t) => bail!(
                "{} already holds {} codes; quantize takes f32 or CSV input",
                path.display(),
                t.format
            ),
        }
    } else {
        let text = std::str::from_utf8(&bytes)
            .with_context(|| format!("{} is neither a tensor container nor UTF-8 CSV", path.display()))?;
        parse_csv(text)
    }
}

/// Parse CSV into `[rows, cols]` plus the values in row-major order.
/// Values separated by commas, one row per line; blank lines skipped.
fn parse_csv(text: &str) -> Result<(Vec<u32>, Vec<f64>)> {
    let mut rows = 0u32;
    let mut width: Option<usize> = None;
    let mut values = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut count = 0usize;
        for field in line.split(',') {
            let field = field.trim();
            if field.is_empty() {
                continue;
            }
            let v: f64 = field
                .parse()
                .with_context(|| format!("line {}: bad number {field:?}", ln + 1))?;
            values.push(v);
            count += 1;
        }
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                bail!("line {}: {} values, earlier rows had {}", ln + 1, count, w)
            }
            _ => {}
        }
        rows += 1;
    }
    let width = width.filter(|&w| w > 0).context("no values found")?;
    Ok((vec![rows, width as u32], values))
}

/// Resolve `--config`: the preset names JACK and BASELINE, or a path to an
/// ArrayConfig JSON file.
pub fn resolve_config(spec: &str) -> Result<ArrayConfig> {
    if spec.eq_ignore_ascii_case("jack") || spec.eq_ignore_ascii_case("baseline") {
        return Ok(ArrayConfig::preset(spec)?);
    }
    let text = fs::read_to_string(spec).with_context(|| {
        format!("config {spec:?} is neither a preset (JACK, BASELINE) nor a readable file")
    })?;
    let cfg: ArrayConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing config {spec:?}"))?;
    cfg.validate()?;
    Ok(cfg)
}
