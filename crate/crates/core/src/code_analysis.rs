//! Structure of the cloud's linear code: generator matrix, minimum distance,
//! column norms, server dependency graph and its chromatic number.
//!
//! The generator matrix is stored `K x N` (packets x servers) so that server
//! `i` owns column `i`. Entries are the natural-map images `0..p'` of field
//! elements; norms are taken over the integers, everything else mod `p'`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `K * log2(p')` for which the codebook is enumerated exactly.
pub const MAX_ENUMERATION_BITS: f64 = 24.0;

/// Largest vertex count accepted by [`chromatic_number`].
pub const MAX_COLORING_VERTICES: usize = 24;

pub fn is_prime(p: u32) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2u32;
    while d.saturating_mul(d) <= p {
        if p.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// `K x N` generator matrix over a prime field, with server `i` owning column `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct GeneratorMatrix {
    field_prime: u32,
    rows: Vec<Vec<u32>>,
}

#[derive(Deserialize)]
struct RawMatrix {
    field_prime: u32,
    rows: Vec<Vec<u32>>,
}

impl TryFrom<RawMatrix> for GeneratorMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        Self::new(raw.rows, raw.field_prime)
    }
}

impl GeneratorMatrix {
    /// Builds a validated generator matrix.
    ///
    /// Rejects entries outside `0..p'`, `K > N`, all-zero columns and
    /// matrices whose rank mod `p'` is below `K`.
    pub fn new(rows: Vec<Vec<u32>>, field_prime: u32) -> Result<Self> {
        let code = Self::from_parts(rows, field_prime)?;
        let (k, n) = (code.k(), code.n());
        if k > n {
            return Err(Error::config(
                "generator",
                format!("K={k} exceeds N={n}; need 1 <= K <= N"),
            ));
        }
        let rank = code.rank();
        if rank != k {
            return Err(Error::config(
                "generator",
                format!("rank mod {field_prime} is {rank}, expected K={k}"),
            ));
        }
        Ok(code)
    }

    /// Shape, range and column checks only; used for column restrictions,
    /// which need not have full row rank.
    fn from_parts(rows: Vec<Vec<u32>>, field_prime: u32) -> Result<Self> {
        if !is_prime(field_prime) {
            return Err(Error::config(
                "p_prime",
                format!("{field_prime} is not a prime"),
            ));
        }
        let k = rows.len();
        if k == 0 {
            return Err(Error::config("generator", "matrix has no rows"));
        }
        let n = rows[0].len();
        if n == 0 {
            return Err(Error::config("generator", "matrix has no columns"));
        }
        for (j, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::config(
                    format!("generator.row[{j}]"),
                    format!("has {} entries, expected {n}", row.len()),
                ));
            }
            if let Some(i) = row.iter().position(|&v| v >= field_prime) {
                return Err(Error::config(
                    format!("generator.row[{j}][{i}]"),
                    format!("entry {} outside 0..{field_prime}", row[i]),
                ));
            }
        }
        if let Some(i) = (0..n).find(|&i| rows.iter().all(|r| r[i] == 0)) {
            return Err(Error::config(
                format!("generator.column[{i}]"),
                "all-zero column leaves the server nothing to decode",
            ));
        }
        Ok(Self { field_prime, rows })
    }

    pub fn identity(n: usize, field_prime: u32) -> Result<Self> {
        let rows = (0..n)
            .map(|j| (0..n).map(|i| u32::from(i == j)).collect())
            .collect();
        Self::new(rows, field_prime)
    }

    /// Number of source packets (rows).
    pub fn k(&self) -> usize {
        self.rows.len()
    }

    /// Number of servers (columns).
    pub fn n(&self) -> usize {
        self.rows[0].len()
    }

    pub fn field_prime(&self) -> u32 {
        self.field_prime
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn entry(&self, row: usize, col: usize) -> u32 {
        self.rows[row][col]
    }

    pub fn column(&self, col: usize) -> Vec<u32> {
        self.rows.iter().map(|r| r[col]).collect()
    }

    /// Multiplies every entry by `factor` (integer, not mod `p'`); the result
    /// must still fit the field's natural-map range.
    pub fn scaled(&self, factor: u32, field_prime: u32) -> Result<Self> {
        let rows = self
            .rows
            .iter()
            .map(|r| r.iter().map(|&v| v * factor).collect())
            .collect();
        Self::new(rows, field_prime)
    }

    /// Rank over `F_p'`.
    pub fn rank(&self) -> usize {
        let p = u64::from(self.field_prime);
        let mut m: Vec<Vec<u64>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(|&v| u64::from(v) % p).collect())
            .collect();
        let (k, n) = (self.k(), self.n());
        let mut rank = 0;
        for col in 0..n {
            if rank == k {
                break;
            }
            let Some(pivot) = (rank..k).find(|&r| m[r][col] != 0) else {
                continue;
            };
            m.swap(rank, pivot);
            let inv = mod_pow(m[rank][col], p - 2, p);
            for v in m[rank].iter_mut() {
                *v = *v * inv % p;
            }
            let pivot_row = m[rank].clone();
            for (r, row) in m.iter_mut().enumerate() {
                if r != rank && row[col] != 0 {
                    let factor = row[col];
                    for (x, &y) in row.iter_mut().zip(&pivot_row) {
                        *x = (*x + p - factor * y % p) % p;
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    /// Column restriction to `subset` (0-based server indices, kept in the
    /// given order). The rank requirement is waived for the result.
    pub fn submatrix(&self, subset: &[usize]) -> Result<Self> {
        if subset.is_empty() {
            return Err(Error::config("subset", "empty server subset"));
        }
        if let Some(&bad) = subset.iter().find(|&&i| i >= self.n()) {
            return Err(Error::config(
                "subset",
                format!("server index {bad} out of range 0..{}", self.n()),
            ));
        }
        let rows = self
            .rows
            .iter()
            .map(|r| subset.iter().map(|&i| r[i]).collect())
            .collect();
        Self::from_parts(rows, self.field_prime)
    }

    /// Parses a scheme definition file.
    ///
    /// ```text
    /// # comment
    /// K = 4
    /// N = 8
    /// p_prime = 2
    /// 1 0 0 0 1 0 0 1
    /// ...
    /// ```
    ///
    /// The three header fields must precede the `K` rows of `N` entries.
    pub fn parse_definition(text: &str) -> Result<Self> {
        let mut k: Option<usize> = None;
        let mut n: Option<usize> = None;
        let mut p: Option<u32> = None;
        let mut rows: Vec<Vec<u32>> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some((key, value)) = line.split_once('=') {
                let key = key.trim();
                let value = value.trim();
                if !rows.is_empty() {
                    return Err(Error::config(
                        format!("line {lineno}"),
                        format!("field `{key}` after matrix rows"),
                    ));
                }
                let at = format!("line {lineno}: field {key}");
                match key {
                    "K" | "N" => {
                        let slot = if key == "K" { &mut k } else { &mut n };
                        if slot.is_some() {
                            return Err(Error::config(at, "duplicate field"));
                        }
                        let v: usize = value
                            .parse()
                            .map_err(|_| Error::config(&at, format!("`{value}` is not a positive integer")))?;
                        if v == 0 {
                            return Err(Error::config(at, "must be positive"));
                        }
                        *slot = Some(v);
                    }
                    "p_prime" => {
                        if p.is_some() {
                            return Err(Error::config(at, "duplicate field"));
                        }
                        let v: u32 = value
                            .parse()
                            .map_err(|_| Error::config(&at, format!("`{value}` is not an integer")))?;
                        if !is_prime(v) {
                            return Err(Error::config(at, format!("{v} is not a prime")));
                        }
                        p = Some(v);
                    }
                    other => {
                        return Err(Error::config(
                            format!("line {lineno}"),
                            format!("unknown field `{other}`"),
                        ))
                    }
                }
                continue;
            }

            let (Some(kk), Some(nn), Some(pp)) = (k, n, p) else {
                return Err(Error::config(
                    format!("line {lineno}"),
                    "matrix row before K, N and p_prime are all set",
                ));
            };
            if rows.len() == kk {
                return Err(Error::config(
                    format!("line {lineno}"),
                    format!("more than K={kk} rows"),
                ));
            }
            let mut row = Vec::with_capacity(nn);
            for (col, tok) in line.split_whitespace().enumerate() {
                let v: u32 = tok.parse().map_err(|_| {
                    Error::config(
                        format!("line {lineno}: column {}", col + 1),
                        format!("`{tok}` is not a non-negative integer"),
                    )
                })?;
                if v >= pp {
                    return Err(Error::config(
                        format!("line {lineno}: column {}", col + 1),
                        format!("entry {v} outside 0..{pp}"),
                    ));
                }
                row.push(v);
            }
            if row.len() != nn {
                return Err(Error::config(
                    format!("line {lineno}"),
                    format!("row has {} entries, expected N={nn}", row.len()),
                ));
            }
            rows.push(row);
        }

        let (Some(kk), Some(_), Some(pp)) = (k, n, p) else {
            let missing = [("K", k.is_none()), ("N", n.is_none()), ("p_prime", p.is_none())]
                .iter()
                .filter(|(_, m)| *m)
                .map(|(name, _)| *name)
                .collect::<Vec<_>>()
                .join(", ");
            return Err(Error::config("definition", format!("missing field(s): {missing}")));
        };
        if rows.len() != kk {
            return Err(Error::config(
                "definition",
                format!("found {} rows, expected K={kk}", rows.len()),
            ));
        }
        Self::new(rows, pp)
    }

    pub fn from_definition_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_definition(&text).map_err(|e| match e {
            Error::Config { path: at, message } => Error::Config {
                path: format!("{}: {at}", path.display()),
                message,
            },
            other => other,
        })
    }

    /// Inverse of [`GeneratorMatrix::parse_definition`].
    pub fn to_definition(&self) -> String {
        let mut out = format!("K = {}\nN = {}\np_prime = {}\n", self.k(), self.n(), self.field_prime);
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(u32::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for GeneratorMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(u32::to_string).collect();
            writeln!(f, "[{}]", line.join(" "))?;
        }
        Ok(())
    }
}

fn mod_pow(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % m;
        }
        base = base * base % m;
        exp >>= 1;
    }
    acc
}

/// Minimum Hamming weight over all nonzero codewords `m G mod p'`.
///
/// The codebook is walked as an odometer over message digits: bumping digit
/// `j` adds row `j` to the running codeword, and a digit wrapping to zero has
/// added its row exactly `p'` times, which is zero mod `p'`.
pub fn min_distance(code: &GeneratorMatrix) -> Result<usize> {
    let k = code.k();
    let n = code.n();
    let p = code.field_prime();
    let bits = k as f64 * f64::from(p).log2();
    if bits > MAX_ENUMERATION_BITS + 1e-9 {
        return Err(Error::SizeGuard {
            what: "code",
            detail: format!(
                "K*log2(p') = {bits:.2} bits exceeds {MAX_ENUMERATION_BITS} for exact d_min"
            ),
        });
    }

    let mut digits = vec![0u32; k];
    let mut word = vec![0u32; n];
    let mut best = n;
    loop {
        let mut j = 0;
        loop {
            if j == k {
                return Ok(best);
            }
            digits[j] += 1;
            for (w, &g) in word.iter_mut().zip(&code.rows()[j]) {
                *w = (*w + g) % p;
            }
            if digits[j] < p {
                break;
            }
            digits[j] = 0;
            j += 1;
        }
        let weight = word.iter().filter(|&&w| w != 0).count();
        if weight < best {
            best = weight;
            if best == 1 {
                return Ok(1);
            }
        }
    }
}

/// Undirected graph on servers; an edge joins two servers whose columns
/// share a nonzero row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyGraph {
    adjacency: Vec<Vec<bool>>,
}

impl DependencyGraph {
    pub fn empty(vertex_count: usize) -> Self {
        Self {
            adjacency: vec![vec![false; vertex_count]; vertex_count],
        }
    }

    /// Builds a graph from explicit edges; rejects self-loops and
    /// out-of-range endpoints.
    pub fn from_edges(vertex_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(vertex_count);
        for &(a, b) in edges {
            if a == b {
                return Err(Error::config("edges", format!("self-loop at vertex {a}")));
            }
            if a >= vertex_count || b >= vertex_count {
                return Err(Error::config(
                    "edges",
                    format!("edge ({a},{b}) outside 0..{vertex_count}"),
                ));
            }
            g.adjacency[a][b] = true;
            g.adjacency[b][a] = true;
        }
        Ok(g)
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a][b]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].iter().filter(|&&e| e).count()
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.vertex_count();
        (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.adjacency[i][j])
            .collect()
    }

    pub fn induced_subgraph(&self, subset: &[usize]) -> Self {
        let adjacency = subset
            .iter()
            .map(|&a| subset.iter().map(|&b| self.adjacency[a][b]).collect())
            .collect();
        Self { adjacency }
    }
}

pub fn dependency_graph(code: &GeneratorMatrix) -> DependencyGraph {
    let n = code.n();
    let mut g = DependencyGraph::empty(n);
    for row in code.rows() {
        let support: Vec<usize> = (0..n).filter(|&i| row[i] != 0).collect();
        for (x, &a) in support.iter().enumerate() {
            for &b in &support[x + 1..] {
                g.adjacency[a][b] = true;
                g.adjacency[b][a] = true;
            }
        }
    }
    g
}

/// Exact chromatic number by backtracking over a degree-descending vertex
/// order, trying color counts upward from a clique lower bound.
pub fn chromatic_number(graph: &DependencyGraph) -> Result<usize> {
    let n = graph.vertex_count();
    if n > MAX_COLORING_VERTICES {
        return Err(Error::SizeGuard {
            what: "dependency graph",
            detail: format!("{n} vertices exceeds {MAX_COLORING_VERTICES} for exact coloring"),
        });
    }
    if n == 0 {
        return Ok(0);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| std::cmp::Reverse(graph.degree(v)));
    // Neighbour masks in the reordered labelling.
    let mut pos = vec![0usize; n];
    for (p, &v) in order.iter().enumerate() {
        pos[v] = p;
    }
    let masks: Vec<u32> = order
        .iter()
        .map(|&v| {
            (0..n)
                .filter(|&u| graph.has_edge(v, u))
                .fold(0u32, |m, u| m | (1 << pos[u]))
        })
        .collect();

    let lower = greedy_clique(&masks).max(1);
    let upper = greedy_coloring(&masks);
    let mut colors = vec![usize::MAX; n];
    for k in lower..upper {
        if color_with(&masks, k, 0, 0, &mut colors) {
            return Ok(k);
        }
    }
    Ok(upper)
}

fn greedy_clique(masks: &[u32]) -> usize {
    let n = masks.len();
    let mut best = 0;
    for start in 0..n {
        let mut candidates = masks[start];
        let mut size = 1;
        while candidates != 0 {
            let v = candidates.trailing_zeros() as usize;
            candidates &= masks[v];
            size += 1;
        }
        best = best.max(size);
    }
    best
}

fn greedy_coloring(masks: &[u32]) -> usize {
    let mut colors: Vec<usize> = Vec::with_capacity(masks.len());
    for (v, &m) in masks.iter().enumerate() {
        let used: Vec<usize> = (0..v).filter(|&u| m & (1 << u) != 0).map(|u| colors[u]).collect();
        let c = (0..).find(|c| !used.contains(c)).unwrap_or(0);
        colors.push(c);
    }
    colors.iter().max().map_or(0, |&c| c + 1)
}

fn color_with(masks: &[u32], k: usize, v: usize, used: usize, colors: &mut [usize]) -> bool {
    if v == masks.len() {
        return true;
    }
    // A fresh color is interchangeable with any other unused one.
    let limit = (used + 1).min(k);
    for c in 0..limit {
        let clash = (0..v).any(|u| masks[v] & (1 << u) != 0 && colors[u] == c);
        if clash {
            continue;
        }
        colors[v] = c;
        if color_with(masks, k, v + 1, used.max(c + 1), colors) {
            return true;
        }
    }
    colors[v] = usize::MAX;
    false
}

/// `||g_i||^2` per column over the natural-map integers.
pub fn column_sq_norms(code: &GeneratorMatrix) -> Vec<u64> {
    (0..code.n())
        .map(|i| {
            code.rows()
                .iter()
                .map(|r| u64::from(r[i]) * u64::from(r[i]))
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeMetrics {
    pub d_min: usize,
    pub chromatic_number: usize,
    pub column_sq_norms: Vec<u64>,
}

impl CodeMetrics {
    pub fn compute(code: &GeneratorMatrix) -> Result<Self> {
        Ok(Self {
            d_min: min_distance(code)?,
            chromatic_number: chromatic_number(&dependency_graph(code))?,
            column_sq_norms: column_sq_norms(code),
        })
    }
}
