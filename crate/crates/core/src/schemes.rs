//! Catalog of baseline server-coding schemes and the block length each one
//! implies for a fixed frame.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::code_analysis::{CodeMetrics, GeneratorMatrix};
use crate::error::{Error, Result};
use crate::rate::{ChannelParams, ServerErrorProfile};

/// Servers used by the stored 4x8 stand-in code.
pub const NFV_SERVERS: usize = 8;

/// Note attached to outputs that use the stand-in NFV matrix.
pub const NFV_STANDIN_NOTE: &str = "nfv: search-found stand-in matrix (K=4, N=8, d_min=3, chi=3); \
     not the original published generator";

/// Stand-in `[I_4 | P]` code whose parity columns form a 4-cycle of weight-2
/// columns: `d_min = 3`, chromatic number 3, every column norm at most 2.
pub fn nfv_standin() -> GeneratorMatrix {
    GeneratorMatrix::new(
        vec![
            vec![1, 0, 0, 0, 1, 0, 0, 1],
            vec![0, 1, 0, 0, 1, 1, 0, 0],
            vec![0, 0, 1, 0, 0, 1, 1, 0],
            vec![0, 0, 0, 1, 0, 0, 1, 1],
        ],
        2,
    )
    .expect("stand-in matrix is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    /// One server decodes the whole frame.
    Ss,
    /// Every server decodes the whole frame.
    Rpt,
    /// Frame split into `N` disjoint parts.
    Prl,
    /// `N - 1` systematic servers plus one parity server.
    Spc,
    /// Stored 4x8 code.
    Nfv,
    Custom,
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SchemeKind::Ss => "ss",
            SchemeKind::Rpt => "rpt",
            SchemeKind::Prl => "prl",
            SchemeKind::Spc => "spc",
            SchemeKind::Nfv => "nfv",
            SchemeKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ss" => Ok(SchemeKind::Ss),
            "rpt" => Ok(SchemeKind::Rpt),
            "prl" => Ok(SchemeKind::Prl),
            "spc" => Ok(SchemeKind::Spc),
            "nfv" => Ok(SchemeKind::Nfv),
            "custom" => Ok(SchemeKind::Custom),
            other => Err(Error::config(
                "scheme",
                format!("unknown scheme `{other}` (expected ss, rpt, prl, spc, nfv, custom:<path>)"),
            )),
        }
    }
}

/// Frame shared by all schemes: length `L` symbols over `F_p` sent at rate `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameParams {
    #[serde(rename = "L")]
    pub length: usize,
    #[serde(rename = "R")]
    pub rate: f64,
    #[serde(rename = "p")]
    pub user_prime: u32,
}

impl FrameParams {
    /// Block length `n` from `R = (k / n) log2 p` with `k = L / K`.
    pub fn block_length(&self, k_packets: usize) -> Result<usize> {
        if k_packets == 0 || !self.length.is_multiple_of(k_packets) {
            return Err(Error::config(
                "frame.L",
                format!("L={} is not divisible by K={k_packets}", self.length),
            ));
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::config("frame.R", "rate must be > 0 to derive a block length"));
        }
        let k = (self.length / k_packets) as f64;
        let n = k * f64::from(self.user_prime).log2() / self.rate;
        let rounded = n.round();
        if rounded < 1.0 || (n - rounded).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::config(
                "frame",
                format!("block length k*log2(p)/R = {n} is not a positive integer"),
            ));
        }
        Ok(rounded as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub name: String,
    pub builder: SchemeKind,
    /// Number of servers `N`; fixed for `ss` (1) and `nfv` (8).
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub servers: Option<usize>,
    #[serde(default = "default_scale")]
    pub scale: u32,
    #[serde(default = "default_p_prime")]
    pub p_prime: u32,
    /// Scheme definition file for `custom`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix_file: Option<PathBuf>,
    /// Inline generator rows for `custom`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<u32>>>,
}

fn default_scale() -> u32 {
    1
}

fn default_p_prime() -> u32 {
    2
}

impl SchemeSpec {
    pub fn new(kind: SchemeKind, servers: Option<usize>) -> Self {
        Self {
            name: kind.to_string(),
            builder: kind,
            servers,
            scale: 1,
            p_prime: 2,
            matrix_file: None,
            matrix: None,
        }
    }

    pub fn scaled(mut self, scale: u32, p_prime: u32) -> Self {
        self.scale = scale;
        self.p_prime = p_prime;
        if scale != 1 {
            self.name = format!("{}x{}", self.name, scale);
        }
        self
    }

    /// Parses a command-line scheme name: `ss`, `rpt`, `prl`, `spc`, `nfv` or
    /// `custom:<path>`.
    pub fn from_cli_name(name: &str, servers: usize) -> Result<Self> {
        if let Some(path) = name.strip_prefix("custom:") {
            if path.is_empty() {
                return Err(Error::config("scheme", "custom scheme needs a path"));
            }
            let mut spec = Self::new(SchemeKind::Custom, None);
            spec.matrix_file = Some(PathBuf::from(path));
            return Ok(spec);
        }
        let kind: SchemeKind = name.parse()?;
        if kind == SchemeKind::Custom {
            return Err(Error::config("scheme", "use custom:<path>"));
        }
        let servers = match kind {
            SchemeKind::Ss | SchemeKind::Nfv => None,
            _ => Some(servers),
        };
        Ok(Self::new(kind, servers))
    }
}

/// A scheme's code and block length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuiltScheme {
    pub name: String,
    pub kind: SchemeKind,
    pub code: GeneratorMatrix,
    /// Block length per server.
    pub n: usize,
    /// Source packets.
    pub k: usize,
    pub notes: Vec<String>,
}

pub fn build(spec: &SchemeSpec, frame: &FrameParams) -> Result<BuiltScheme> {
    let at = |field: &str| format!("schemes.{}.{field}", spec.name);
    if spec.scale == 0 {
        return Err(Error::config(at("scale"), "must be positive"));
    }
    if spec.builder != SchemeKind::Custom && spec.scale >= spec.p_prime {
        return Err(Error::config(
            at("scale"),
            format!("scale {} must be below p_prime {}", spec.scale, spec.p_prime),
        ));
    }
    let servers = |fixed: Option<usize>| -> Result<usize> {
        match (fixed, spec.servers) {
            (Some(f), None) => Ok(f),
            (Some(f), Some(s)) if s == f => Ok(f),
            (Some(f), Some(s)) => Err(Error::config(
                at("N"),
                format!("{} uses exactly {f} server(s), got {s}", spec.builder),
            )),
            (None, Some(s)) if s >= 1 => Ok(s),
            (None, _) => Err(Error::config(at("N"), "number of servers required")),
        }
    };

    let mut notes = Vec::new();
    let base = match spec.builder {
        SchemeKind::Ss => {
            servers(Some(1))?;
            GeneratorMatrix::new(vec![vec![1]], 2)?
        }
        SchemeKind::Rpt => GeneratorMatrix::new(vec![vec![1; servers(None)?]], 2)?,
        SchemeKind::Prl => GeneratorMatrix::identity(servers(None)?, 2)?,
        SchemeKind::Spc => {
            let n = servers(None)?;
            if n < 2 {
                return Err(Error::config(at("N"), "spc needs at least 2 servers"));
            }
            let rows = (0..n - 1)
                .map(|j| (0..n).map(|i| u32::from(i == j || i == n - 1)).collect())
                .collect();
            GeneratorMatrix::new(rows, 2)?
        }
        SchemeKind::Nfv => {
            servers(Some(NFV_SERVERS))?;
            notes.push(NFV_STANDIN_NOTE.to_string());
            nfv_standin()
        }
        SchemeKind::Custom => {
            let code = match (&spec.matrix, &spec.matrix_file) {
                (Some(rows), None) => GeneratorMatrix::new(rows.clone(), spec.p_prime)?,
                (None, Some(path)) => GeneratorMatrix::from_definition_file(path)?,
                _ => {
                    return Err(Error::config(
                        at("matrix"),
                        "custom scheme needs exactly one of `matrix` or `matrix_file`",
                    ))
                }
            };
            if let Some(s) = spec.servers {
                if s != code.n() {
                    return Err(Error::config(
                        at("N"),
                        format!("matrix has {} columns, N={s}", code.n()),
                    ));
                }
            }
            code
        }
    };

    let field = match spec.builder {
        SchemeKind::Custom => base.field_prime(),
        _ => spec.p_prime,
    };
    let code = if spec.scale == 1 && field == base.field_prime() {
        base
    } else {
        base.scaled(spec.scale, field).map_err(|e| match e {
            Error::Config { path, message } => Error::Config {
                path: format!("{}.{path}", at("scale")),
                message,
            },
            other => other,
        })?
    };
    let k = code.k();
    let n = frame.block_length(k)?;
    Ok(BuiltScheme {
        name: spec.name.clone(),
        kind: spec.builder,
        code,
        n,
        k,
        notes,
    })
}

/// A built scheme together with its code metrics and per-server error profile.
#[derive(Debug, Clone, Serialize)]
pub struct AnalyzedScheme {
    #[serde(flatten)]
    pub scheme: BuiltScheme,
    pub metrics: CodeMetrics,
    pub profile: ServerErrorProfile,
}

impl AnalyzedScheme {
    pub fn analyze(scheme: BuiltScheme, ch: &ChannelParams) -> Result<Self> {
        let metrics = CodeMetrics::compute(&scheme.code)?;
        let profile = ServerErrorProfile::compute(ch, &metrics.column_sq_norms, scheme.n)?;
        Ok(Self {
            scheme,
            metrics,
            profile,
        })
    }

    pub fn name(&self) -> &str {
        &self.scheme.name
    }

    pub fn n_servers(&self) -> usize {
        self.scheme.code.n()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code_analysis::{chromatic_number, dependency_graph, min_distance};

    fn frame() -> FrameParams {
        FrameParams {
            length: 504,
            rate: 0.5,
            user_prime: 2,
        }
    }

    fn tuple(spec: SchemeSpec) -> (usize, usize, usize, usize) {
        let b = build(&spec, &frame()).unwrap();
        let d = min_distance(&b.code).unwrap();
        let chi = chromatic_number(&dependency_graph(&b.code)).unwrap();
        (b.k, b.n, d, chi)
    }

    #[test]
    fn published_scheme_tuples() {
        assert_eq!(tuple(SchemeSpec::new(SchemeKind::Ss, None)), (1, 1008, 1, 1));
        assert_eq!(tuple(SchemeSpec::new(SchemeKind::Rpt, Some(8))), (1, 1008, 8, 8));
        assert_eq!(tuple(SchemeSpec::new(SchemeKind::Prl, Some(8))), (8, 126, 1, 1));
        assert_eq!(tuple(SchemeSpec::new(SchemeKind::Spc, Some(8))), (7, 144, 2, 2));
        assert_eq!(tuple(SchemeSpec::new(SchemeKind::Nfv, None)), (4, 252, 3, 3));
    }

    #[test]
    fn block_length_consistency() {
        let f = frame();
        for k in [1usize, 4, 7, 8] {
            let n = f.block_length(k).unwrap();
            // R = (k/n) log2 p
            let r = (f.length / k) as f64 / n as f64 * f64::from(f.user_prime).log2();
            assert!((r - f.rate).abs() < 1e-12);
            assert_eq!(n * k, (f.length as f64 / f.rate) as usize);
        }
        assert!(f.block_length(5).is_err());
        let ternary = FrameParams { user_prime: 3, ..f };
        assert!(ternary.block_length(8).is_err());
        let zero_rate = FrameParams { rate: 0.0, ..f };
        assert!(zero_rate.block_length(8).is_err());
    }

    #[test]
    fn scaled_variants() {
        let s3 = SchemeSpec::new(SchemeKind::Prl, Some(8)).scaled(3, 5);
        let b = build(&s3, &frame()).unwrap();
        assert_eq!(b.name, "prlx3");
        assert_eq!(b.code.field_prime(), 5);
        assert!(b.code.rows().iter().enumerate().all(|(j, r)| r[j] == 3));
        assert_eq!(min_distance(&b.code).unwrap(), 1);
        assert!(build(&SchemeSpec::new(SchemeKind::Prl, Some(8)).scaled(5, 5), &frame()).is_err());
        assert!(build(&SchemeSpec::new(SchemeKind::Prl, Some(8)).scaled(0, 5), &frame()).is_err());
    }

    #[test]
    fn server_count_rules() {
        assert!(build(&SchemeSpec::new(SchemeKind::Ss, Some(3)), &frame()).is_err());
        assert!(build(&SchemeSpec::new(SchemeKind::Nfv, Some(7)), &frame()).is_err());
        assert!(build(&SchemeSpec::new(SchemeKind::Rpt, None), &frame()).is_err());
        assert!(build(&SchemeSpec::new(SchemeKind::Nfv, Some(8)), &frame()).is_ok());
    }

    #[test]
    fn custom_inline_and_cli_names() {
        let mut spec = SchemeSpec::new(SchemeKind::Custom, None);
        spec.matrix = Some(vec![vec![1, 0, 1], vec![0, 1, 1]]);
        let f = FrameParams {
            length: 4,
            rate: 0.5,
            user_prime: 2,
        };
        let b = build(&spec, &f).unwrap();
        assert_eq!((b.k, b.n), (2, 4));

        let c = SchemeSpec::from_cli_name("custom:/tmp/x.txt", 8).unwrap();
        assert_eq!(c.matrix_file.as_deref(), Some(std::path::Path::new("/tmp/x.txt")));
        assert!(SchemeSpec::from_cli_name("custom:", 8).is_err());
        assert!(SchemeSpec::from_cli_name("mds", 8).is_err());
        assert_eq!(SchemeSpec::from_cli_name("spc", 8).unwrap().servers, Some(8));
    }

    #[test]
    fn standin_carries_note() {
        let b = build(&SchemeSpec::new(SchemeKind::Nfv, None), &frame()).unwrap();
        assert_eq!(b.notes, vec![NFV_STANDIN_NOTE.to_string()]);
    }
}
