//! Dataset files and user covariates.
//!
//! A dataset file starts with `#` manifest lines (format tag, config echo
//! as `key=value` tokens, role counts) followed by a CSV body:
//!
//! ```text
//! id,role,w,x0..x{d-1},y0_1..y0_{t0},y0_T,y1_1..y1_{t0},y1_T
//! ```
//!
//! Floats are written in shortest round-trip form, so a read after a write
//! reproduces every value exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{PanelDataset, Role, SimConfig};
use crate::error::{Error, Result};
use crate::ndcore::Tensor;

const TAG: &str = "# ltee-dataset v1";

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_dataset(path: &Path, ds: &PanelDataset) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    writeln!(f, "{TAG}")?;
    let echo: Vec<String> = ds.config.to_pairs().into_iter().map(|(k, v)| format!("{k}={v}")).collect();
    writeln!(f, "# config {}", echo.join(" "))?;
    writeln!(
        f,
        "# roles source={} target={}",
        ds.indices(Role::Source).len(),
        ds.indices(Role::Target).len()
    )?;

    let (d, width) = (ds.context_dim(), ds.t0() + 1);
    let mut wtr = csv::Writer::from_writer(f);
    let mut header = vec!["id".to_string(), "role".into(), "w".into()];
    header.extend((0..d).map(|j| format!("x{j}")));
    for arm in 0..2 {
        header.extend((1..=ds.t0()).map(|t| format!("y{arm}_{t}")));
        header.push(format!("y{arm}_T"));
    }
    wtr.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec = Vec::with_capacity(3 + d + 2 * width);
        rec.push(i.to_string());
        rec.push(match ds.role[i] {
            Role::Source => "source".into(),
            Role::Target => "target".into(),
        });
        rec.push(ds.w[i].to_string());
        rec.extend(ds.x.row_slice(i).iter().map(|&v| fmt(v)));
        for y in &ds.y_pot {
            rec.extend(y.row_slice(i).iter().map(|&v| fmt(v)));
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

fn perr<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse(msg.into()))
}

pub fn read_dataset(path: &Path) -> Result<PanelDataset> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(TAG) {
        return perr(format!("{}: not a dataset file", path.display()));
    }
    let cfg_line = lines.next().unwrap_or_default();
    let Some(echo) = cfg_line.strip_prefix("# config ") else {
        return perr("missing config manifest line");
    };
    let mut config = SimConfig::ihdp(1, 2);
    for tok in echo.split_whitespace() {
        let Some((k, v)) = tok.split_once('=') else {
            return perr(format!("bad config token {tok:?}"));
        };
        if !config.set(k, v).map_err(|e| Error::Parse(e.to_string()))? {
            return perr(format!("unknown config key {k:?}"));
        }
    }
    let body_start = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(|l| l.len() + 1)
        .sum::<usize>();

    let mut rdr = csv::Reader::from_reader(&text.as_bytes()[body_start.min(text.len())..]);
    let headers = rdr.headers()?.clone();
    let d = headers.iter().filter(|h| h.starts_with('x')).count();
    let width = config.t0 + 1;
    if headers.len() != 3 + d + 2 * width {
        return perr(format!(
            "{} columns, expected {} for t0 = {}",
            headers.len(),
            3 + d + 2 * width,
            config.t0
        ));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("bad number {s:?}: {e}")));
    let (mut x, mut w, mut role, mut y0, mut y1) = (vec![], vec![], vec![], vec![], vec![]);
    for rec in rdr.records() {
        let rec = rec?;
        role.push(match &rec[1] {
            "source" => Role::Source,
            "target" => Role::Target,
            r => return perr(format!("bad role {r:?}")),
        });
        w.push(match &rec[2] {
            "0" => 0,
            "1" => 1,
            v => return perr(format!("bad treatment {v:?}")),
        });
        for j in 0..d {
            x.push(num(&rec[3 + j])?);
        }
        for k in 0..width {
            y0.push(num(&rec[3 + d + k])?);
            y1.push(num(&rec[3 + d + width + k])?);
        }
    }
    let n = w.len();
    PanelDataset::new(
        config,
        Tensor::matrix(n, d, x)?,
        w,
        role,
        [Tensor::matrix(n, width, y0)?, Tensor::matrix(n, width, y1)?],
    )
}

/// Numeric matrix from a delimited text file.
///
/// Fields may be separated by commas, tabs or spaces. A first line that
/// does not parse as numbers is taken as a header; `#` lines are skipped.
/// Every row must have the same number of columns.
pub fn load_covariates(path: &Path) -> Result<Tensor> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut first = true;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> =
            line.split([',', '\t', ' ']).filter(|s| !s.is_empty()).collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|s| s.parse::<f64>()).collect();
        let header_slot = std::mem::replace(&mut first, false);
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if header_slot => continue,
            Err(e) => return perr(format!("line {}: {e}", lineno + 1)),
        }
    }
    if rows.is_empty() {
        return perr(format!("{}: no numeric rows", path.display()));
    }
    Tensor::from_rows(&rows).map_err(|e| Error::Parse(e.to_string()))
}
