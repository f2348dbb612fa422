//! Result files.
//!
//! Two tables exist, each with a fixed header:
//!
//! ```text
//! kappa,x0,w1,w2,s,mean,stderr,n,seed,method,observable
//! packs,radius,estimate,log_ci,population,seed
//! ```
//!
//! CSV files are RFC 4180 style, UTF-8, with reals printed to 15
//! significant digits. The resolved run configuration is embedded as a
//! single leading comment line `# config: {json}`. The JSON format carries
//! the same fields: `{"config": ..., "kind": "estimates"|"walkers", "rows": [...]}`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::MonteCarloEstimate;

pub const ESTIMATE_HEADER: [&str; 11] =
    ["kappa", "x0", "w1", "w2", "s", "mean", "stderr", "n", "seed", "method", "observable"];
pub const WALKER_HEADER: [&str; 6] = ["packs", "radius", "estimate", "log_ci", "population", "seed"];

const CONFIG_PREFIX: &str = "# config: ";

/// Formats a real with 15 significant digits, `%.15g` style.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.14e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..15).contains(&exp) {
        let fixed = format!("{:.*}", (14 - exp) as usize, x);
        trim_fraction(&fixed).to_string()
    } else {
        format!("{}e{exp}", trim_fraction(mant))
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Loewner,
    Sde,
    Pde,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ObservableKind {
    /// `h_1`.
    #[serde(rename = "h1")]
    H1,
    /// `h_G`.
    #[serde(rename = "hG")]
    HG,
    /// The martingale `Q_s`.
    #[serde(rename = "Q")]
    Q,
}

macro_rules! text_enum {
    ($ty:ty { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $text),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok(Self::$variant),)+
                    other => Err(Error::Schema(format!("unknown {} `{other}`", stringify!($ty)))),
                }
            }
        }
    };
}

text_enum!(Method { Loewner => "loewner", Sde => "sde", Pde => "pde" });
text_enum!(ObservableKind { H1 => "h1", HG => "hG", Q => "Q" });

/// One aggregate Monte Carlo (or PDE) value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub kappa: f64,
    pub x0: f64,
    pub w1: f64,
    pub w2: f64,
    pub s: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
    pub method: Method,
    pub observable: ObservableKind,
}

impl EstimateRow {
    pub fn estimate(&self) -> MonteCarloEstimate {
        MonteCarloEstimate { mean: self.mean, stderr: self.stderr, n: self.n, seed: self.seed }
    }
}

/// One splitting level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkerRow {
    pub packs: Vec<u32>,
    pub radius: u32,
    pub estimate: f64,
    pub log_ci: f64,
    pub population: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "rows", rename_all = "lowercase")]
pub enum Rows {
    Estimates(Vec<EstimateRow>),
    Walkers(Vec<WalkerRow>),
}

impl Rows {
    pub fn is_empty(&self) -> bool {
        match self {
            Rows::Estimates(r) => r.is_empty(),
            Rows::Walkers(r) => r.is_empty(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub config: serde_json::Value,
    #[serde(flatten)]
    pub rows: Rows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Schema(format!("unknown format `{other}`"))),
        }
    }
}

impl ResultFile {
    pub fn to_bytes(&self, format: Format) -> Result<Vec<u8>> {
        match format {
            Format::Json => {
                let mut out = serde_json::to_vec_pretty(self)?;
                out.push(b'\n');
                Ok(out)
            }
            Format::Csv => self.to_csv(),
        }
    }

    fn to_csv(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CONFIG_PREFIX.as_bytes());
        out.extend_from_slice(serde_json::to_string(&self.config)?.as_bytes());
        out.extend_from_slice(b"\r\n");
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out);
        match &self.rows {
            Rows::Estimates(rows) => {
                w.write_record(ESTIMATE_HEADER)?;
                for r in rows {
                    w.write_record([
                        fmt_sig(r.kappa),
                        fmt_sig(r.x0),
                        fmt_sig(r.w1),
                        fmt_sig(r.w2),
                        fmt_sig(r.s),
                        fmt_sig(r.mean),
                        fmt_sig(r.stderr),
                        r.n.to_string(),
                        r.seed.to_string(),
                        r.method.to_string(),
                        r.observable.to_string(),
                    ])?;
                }
            }
            Rows::Walkers(rows) => {
                w.write_record(WALKER_HEADER)?;
                for r in rows {
                    w.write_record([
                        format_packs(&r.packs),
                        r.radius.to_string(),
                        fmt_sig(r.estimate),
                        fmt_sig(r.log_ci),
                        r.population.to_string(),
                        r.seed.to_string(),
                    ])?;
                }
            }
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    /// Parses either format, sniffing JSON by a leading `{`.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Self::parse_json(text)
        } else {
            Self::parse_csv(text)
        }
    }

    pub fn parse_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("bad JSON result file: {e}")))
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let config = match text.lines().find(|l| l.starts_with(CONFIG_PREFIX)) {
            Some(line) => serde_json::from_str(line[CONFIG_PREFIX.len()..].trim_end())
                .map_err(|e| Error::Schema(format!("bad config line: {e}")))?,
            None => serde_json::Value::Null,
        };
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Schema(format!("unreadable header: {e}")))?
            .iter()
            .map(str::to_owned)
            .collect();
        let rows = if header == ESTIMATE_HEADER {
            let mut rows = Vec::new();
            for rec in reader.records() {
                let rec = rec.map_err(|e| Error::Schema(e.to_string()))?;
                rows.push(parse_estimate_record(&rec)?);
            }
            Rows::Estimates(rows)
        } else if header == WALKER_HEADER {
            let mut rows = Vec::new();
            for rec in reader.records() {
                let rec = rec.map_err(|e| Error::Schema(e.to_string()))?;
                rows.push(parse_walker_record(&rec)?);
            }
            Rows::Walkers(rows)
        } else if header.is_empty() || header.iter().all(|h| h.is_empty()) {
            Rows::Estimates(Vec::new())
        } else {
            return Err(Error::Schema(format!("unknown header {header:?}")));
        };
        Ok(Self { config, rows })
    }
}

fn field<T: FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| Error::Schema(format!("missing column `{name}`")))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::Schema(format!("bad value `{raw}` in column `{name}`")))
}

fn real(rec: &csv::StringRecord, i: usize, name: &str) -> Result<f64> {
    let v: f64 = field(rec, i, name)?;
    if v.is_nan() {
        return Err(Error::Schema(format!("NaN in column `{name}`")));
    }
    Ok(v)
}

fn parse_estimate_record(rec: &csv::StringRecord) -> Result<EstimateRow> {
    if rec.len() != ESTIMATE_HEADER.len() {
        return Err(Error::Schema(format!("expected {} columns, got {}", ESTIMATE_HEADER.len(), rec.len())));
    }
    Ok(EstimateRow {
        kappa: real(rec, 0, "kappa")?,
        x0: real(rec, 1, "x0")?,
        w1: real(rec, 2, "w1")?,
        w2: real(rec, 3, "w2")?,
        s: real(rec, 4, "s")?,
        mean: real(rec, 5, "mean")?,
        stderr: real(rec, 6, "stderr")?,
        n: field(rec, 7, "n")?,
        seed: field(rec, 8, "seed")?,
        method: field(rec, 9, "method")?,
        observable: field(rec, 10, "observable")?,
    })
}

fn parse_walker_record(rec: &csv::StringRecord) -> Result<WalkerRow> {
    if rec.len() != WALKER_HEADER.len() {
        return Err(Error::Schema(format!("expected {} columns, got {}", WALKER_HEADER.len(), rec.len())));
    }
    Ok(WalkerRow {
        packs: parse_count_list(rec.get(0).unwrap_or_default())
            .map_err(|e| Error::Schema(format!("bad packs: {e}")))?,
        radius: field(rec, 1, "radius")?,
        estimate: real(rec, 2, "estimate")?,
        log_ci: real(rec, 3, "log_ci")?,
        population: field(rec, 4, "population")?,
        seed: field(rec, 5, "seed")?,
    })
}

pub fn format_packs(packs: &[u32]) -> String {
    packs.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
}

/// Parses a comma or whitespace separated list of finite reals.
pub fn parse_real_list(text: &str) -> Result<Vec<f64>> {
    let items: Vec<&str> = split_list(text);
    if items.is_empty() {
        return Err(Error::Domain("empty list".into()));
    }
    items
        .into_iter()
        .map(|t| match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::Domain(format!("`{t}` is not a finite real"))),
        })
        .collect()
}

/// Parses a comma or whitespace separated list of positive integers.
pub fn parse_count_list(text: &str) -> Result<Vec<u32>> {
    let items: Vec<&str> = split_list(text);
    if items.is_empty() {
        return Err(Error::Domain("empty list".into()));
    }
    items
        .into_iter()
        .map(|t| match t.parse::<u32>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(Error::Domain(format!("`{t}` is not a positive integer"))),
        })
        .collect()
}

fn split_list(text: &str) -> Vec<&str> {
    text.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).collect()
}
