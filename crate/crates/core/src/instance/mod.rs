//! Problem instances: a `width × height` grid with 4-neighbour edges,
//! `k` labels per pixel, unary and pairwise costs, and projection rays.
//!
//! Nodes are indexed row-major, `id = y * width + x`.

mod generate;
mod io;
mod lattice;

use std::fmt;
use std::ops::{Deref, DerefMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use generate::{generate_random_instance, GeneratorConfig, GeneratorMeta};
pub use io::{load_instance, read_pgm, save_instance, write_pgm};
pub use lattice::build_lattice_rays;

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Horizontal,
    Vertical,
    /// Upper left to lower right (`x - y` constant).
    DiagDown,
    /// Lower left to upper right (`x + y` constant).
    DiagUp,
    None,
}

impl Direction {
    /// Parses a compact direction string such as `"hv"` or `"hvdu"`.
    ///
    /// `h` horizontal, `v` vertical, `d` down diagonal, `u` up diagonal.
    pub fn parse_set(spec: &str) -> Result<Vec<Direction>> {
        let mut out = Vec::new();
        for c in spec.chars() {
            let d = match c {
                'h' | 'H' => Direction::Horizontal,
                'v' | 'V' => Direction::Vertical,
                'd' | 'D' => Direction::DiagDown,
                'u' | 'U' => Direction::DiagUp,
                ',' | ' ' | '+' => continue,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown direction flag `{other}` (expected h, v, d or u)"
                    )))
                }
            };
            if !out.contains(&d) {
                out.push(d);
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidArgument("direction set is empty".into()));
        }
        Ok(out)
    }

    pub fn flag(self) -> char {
        match self {
            Direction::Horizontal => 'h',
            Direction::Vertical => 'v',
            Direction::DiagDown => 'd',
            Direction::DiagUp => 'u',
            Direction::None => '-',
        }
    }
}

/// One row of the projection matrix: all coefficients are one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub nodes: Vec<NodeId>,
    pub target: u64,
    pub direction: Direction,
}

impl Ray {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Pairwise cost family on grid edges.
#[derive(Clone, Debug, PartialEq)]
pub enum Pairwise {
    /// `weight * [a != b]`
    Potts(f64),
    /// `weight * |a - b|`
    AbsDiff(f64),
    /// Explicit row-major `k × k` table per edge, in canonical edge order.
    Table(Vec<Vec<f64>>),
}

impl Pairwise {
    /// Representative cost scale, used by the pruning threshold schedule.
    pub fn median_weight(&self) -> f64 {
        match self {
            Pairwise::Potts(w) | Pairwise::AbsDiff(w) => w.abs(),
            Pairwise::Table(tables) => {
                let mut vals: Vec<f64> = tables
                    .iter()
                    .flatten()
                    .copied()
                    .filter(|v| *v > 0.0)
                    .collect();
                if vals.is_empty() {
                    return 1.0;
                }
                vals.sort_by(f64::total_cmp);
                vals[vals.len() / 2]
            }
        }
    }
}

/// Undirected grid edge with `u < v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
}

/// A full label assignment, indexed by node id.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Labeling(pub Vec<usize>);

impl Deref for Labeling {
    type Target = Vec<usize>;
    fn deref(&self) -> &Vec<usize> {
        &self.0
    }
}

impl DerefMut for Labeling {
    fn deref_mut(&mut self) -> &mut Vec<usize> {
        &mut self.0
    }
}

impl From<Vec<usize>> for Labeling {
    fn from(values: Vec<usize>) -> Self {
        Labeling(values)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TomographyInstance {
    width: usize,
    height: usize,
    k: usize,
    /// Row-major `num_nodes × k`.
    unary: Vec<f64>,
    pairwise: Pairwise,
    rays: Vec<Ray>,
    meta: Option<GeneratorMeta>,
}

impl TomographyInstance {
    /// Builds and validates an instance. `unary` defaults to zero.
    pub fn new(
        width: usize,
        height: usize,
        k: usize,
        unary: Option<Vec<f64>>,
        pairwise: Pairwise,
        rays: Vec<Ray>,
    ) -> Result<Self> {
        let n = width.saturating_mul(height);
        let unary = unary.unwrap_or_else(|| vec![0.0; n * k.max(1)]);
        let inst = TomographyInstance {
            width,
            height,
            k,
            unary,
            pairwise,
            rays,
            meta: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn with_meta(mut self, meta: GeneratorMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(Error::validation("width", "must be positive"));
        }
        if self.height == 0 {
            return Err(Error::validation("height", "must be positive"));
        }
        if self.k < 2 {
            return Err(Error::validation("k", format!("label count must be >= 2, got {}", self.k)));
        }
        let n = self.num_nodes();
        if self.unary.len() != n * self.k {
            return Err(Error::validation(
                "unary",
                format!("expected {} entries ({} nodes × {} labels), got {}", n * self.k, n, self.k, self.unary.len()),
            ));
        }
        if let Some(pos) = self.unary.iter().position(|c| !c.is_finite()) {
            return Err(Error::validation(
                format!("unary[{}][{}]", pos / self.k, pos % self.k),
                "cost must be finite",
            ));
        }
        match &self.pairwise {
            Pairwise::Potts(w) | Pairwise::AbsDiff(w) => {
                if !w.is_finite() {
                    return Err(Error::validation("pairwise.weight", "must be finite"));
                }
            }
            Pairwise::Table(tables) => {
                let m = self.num_edges();
                if tables.len() != m {
                    return Err(Error::validation(
                        "pairwise.tables",
                        format!("expected {m} edge tables, got {}", tables.len()),
                    ));
                }
                for (e, t) in tables.iter().enumerate() {
                    if t.len() != self.k * self.k {
                        return Err(Error::validation(
                            format!("pairwise.tables[{e}]"),
                            format!("expected {} entries, got {}", self.k * self.k, t.len()),
                        ));
                    }
                    if t.iter().any(|c| !c.is_finite()) {
                        return Err(Error::validation(format!("pairwise.tables[{e}]"), "cost must be finite"));
                    }
                }
            }
        }
        for (r, ray) in self.rays.iter().enumerate() {
            if ray.nodes.is_empty() {
                return Err(Error::validation(format!("rays[{r}].nodes"), "ray must contain at least one node"));
            }
            let mut seen = vec![false; n];
            for (p, &u) in ray.nodes.iter().enumerate() {
                if u >= n {
                    return Err(Error::validation(
                        format!("rays[{r}].nodes[{p}]"),
                        format!("node {u} outside the {}×{} grid", self.width, self.height),
                    ));
                }
                if seen[u] {
                    return Err(Error::validation(format!("rays[{r}].nodes[{p}]"), format!("node {u} repeated")));
                }
                seen[u] = true;
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_nodes(&self) -> usize {
        self.width * self.height
    }

    pub fn node_id(&self, x: usize, y: usize) -> NodeId {
        y * self.width + x
    }

    pub fn coords(&self, u: NodeId) -> (usize, usize) {
        (u % self.width, u / self.width)
    }

    pub fn rays(&self) -> &[Ray] {
        &self.rays
    }

    pub fn rays_mut(&mut self) -> &mut [Ray] {
        &mut self.rays
    }

    pub fn pairwise(&self) -> &Pairwise {
        &self.pairwise
    }

    pub fn meta(&self) -> Option<&GeneratorMeta> {
        self.meta.as_ref()
    }

    pub fn unary_costs(&self) -> &[f64] {
        &self.unary
    }

    pub fn unary(&self, u: NodeId, x: usize) -> f64 {
        self.unary[u * self.k + x]
    }

    pub fn num_edges(&self) -> usize {
        (self.width - 1) * self.height + self.width * (self.height - 1)
    }

    /// Edges in canonical order: all horizontal edges row by row, then all
    /// vertical edges row by row.
    pub fn edges(&self) -> Vec<Edge> {
        let (w, h) = (self.width, self.height);
        let mut out = Vec::with_capacity(self.num_edges());
        for y in 0..h {
            for x in 0..w - 1 {
                let u = y * w + x;
                out.push(Edge { u, v: u + 1 });
            }
        }
        for y in 0..h - 1 {
            for x in 0..w {
                let u = y * w + x;
                out.push(Edge { u, v: u + w });
            }
        }
        out
    }

    /// Canonical index of the grid edge between `a` and `b`, if they are
    /// 4-neighbours.
    pub fn edge_index(&self, a: NodeId, b: NodeId) -> Option<usize> {
        let (u, v) = if a < b { (a, b) } else { (b, a) };
        let w = self.width;
        if v >= self.num_nodes() {
            return None;
        }
        let (ux, uy) = self.coords(u);
        if v == u + 1 && ux + 1 < w {
            Some(uy * (w - 1) + ux)
        } else if v == u + w {
            Some((w - 1) * self.height + uy * w + ux)
        } else {
            None
        }
    }

    /// Cost of edge `e` (canonical index) with label `a` on its lower and
    /// `b` on its higher endpoint.
    pub fn pairwise_cost(&self, e: usize, a: usize, b: usize) -> f64 {
        match &self.pairwise {
            Pairwise::Potts(w) => {
                if a == b {
                    0.0
                } else {
                    *w
                }
            }
            Pairwise::AbsDiff(w) => *w * (a as f64 - b as f64).abs(),
            Pairwise::Table(t) => t[e][a * self.k + b],
        }
    }

    /// Materialized `k × k` table of edge `e`, oriented `(u, v)` with `u < v`.
    pub fn pairwise_table(&self, e: usize) -> Vec<f64> {
        let k = self.k;
        let mut t = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                t[a * k + b] = self.pairwise_cost(e, a, b);
            }
        }
        t
    }

    /// True when every cost entry is an integer.
    pub fn has_integral_costs(&self) -> bool {
        let int = |c: &f64| c.fract() == 0.0;
        let pw = match &self.pairwise {
            Pairwise::Potts(w) | Pairwise::AbsDiff(w) => int(w),
            Pairwise::Table(t) => t.iter().flatten().all(int),
        };
        pw && self.unary.iter().all(int)
    }

    pub fn check_labeling(&self, labeling: &Labeling) -> Result<()> {
        if labeling.len() != self.num_nodes() {
            return Err(Error::InvalidArgument(format!(
                "labeling has {} entries, grid has {} nodes",
                labeling.len(),
                self.num_nodes()
            )));
        }
        if let Some(u) = labeling.iter().position(|&x| x >= self.k) {
            return Err(Error::InvalidArgument(format!(
                "label {} at node {u} outside 0..{}",
                labeling[u], self.k
            )));
        }
        Ok(())
    }

    /// Ray sums of `labeling`, in ray order.
    pub fn project(&self, labeling: &Labeling) -> Vec<u64> {
        self.rays
            .iter()
            .map(|ray| ray.nodes.iter().map(|&u| labeling[u] as u64).sum())
            .collect()
    }

    pub fn evaluate_energy(&self, labeling: &Labeling) -> f64 {
        let unary: f64 = labeling
            .iter()
            .enumerate()
            .map(|(u, &x)| self.unary(u, x))
            .sum();
        let pairwise: f64 = self
            .edges()
            .iter()
            .enumerate()
            .map(|(e, edge)| self.pairwise_cost(e, labeling[edge.u], labeling[edge.v]))
            .sum();
        unary + pairwise
    }

    /// Per-ray `|Σ x - b|`.
    pub fn check_feasibility(&self, labeling: &Labeling) -> Vec<u64> {
        self.project(labeling)
            .into_iter()
            .zip(&self.rays)
            .map(|(s, ray)| s.abs_diff(ray.target))
            .collect()
    }

    pub fn is_feasible(&self, labeling: &Labeling) -> bool {
        self.check_feasibility(labeling).iter().all(|&r| r == 0)
    }

    /// Overwrites every ray target with the projection of `labeling`.
    pub fn set_targets_from(&mut self, labeling: &Labeling) {
        let sums = self.project(labeling);
        for (ray, s) in self.rays.iter_mut().zip(sums) {
            ray.target = s;
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Direction::Horizontal => "horizontal",
            Direction::Vertical => "vertical",
            Direction::DiagDown => "diag_down",
            Direction::DiagUp => "diag_up",
            Direction::None => "none",
        };
        f.write_str(name)
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "horizontal" => Ok(Direction::Horizontal),
            "vertical" => Ok(Direction::Vertical),
            "diag_down" => Ok(Direction::DiagDown),
            "diag_up" => Ok(Direction::DiagUp),
            "none" => Ok(Direction::None),
            other => Err(Error::parse("direction", format!("unknown direction `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(w: usize, h: usize, k: usize, pw: Pairwise, dirs: &[Direction]) -> TomographyInstance {
        TomographyInstance::new(w, h, k, None, pw, build_lattice_rays(w, h, dirs)).unwrap()
    }

    #[test]
    fn project_all_zero_and_all_max() {
        let inst = grid(3, 2, 4, Pairwise::AbsDiff(1.0), &[Direction::Horizontal, Direction::Vertical]);
        let zero = Labeling(vec![0; 6]);
        assert!(inst.project(&zero).iter().all(|&s| s == 0));
        let full = Labeling(vec![3; 6]);
        let expect: Vec<u64> = inst.rays().iter().map(|r| 3 * r.len() as u64).collect();
        assert_eq!(inst.project(&full), expect);
    }

    #[test]
    fn project_small_image() {
        // [[0,1],[2,1]]
        let inst = grid(2, 2, 3, Pairwise::AbsDiff(1.0), &[Direction::Horizontal, Direction::Vertical]);
        let img = Labeling(vec![0, 1, 2, 1]);
        assert_eq!(inst.project(&img), vec![1, 3, 2, 2]);
    }

    #[test]
    fn energy_examples() {
        let potts = grid(3, 3, 3, Pairwise::Potts(1.0), &[Direction::Horizontal]);
        assert_eq!(potts.evaluate_energy(&Labeling(vec![2; 9])), 0.0);

        let pair = grid(2, 1, 3, Pairwise::AbsDiff(1.0), &[Direction::Horizontal]);
        assert_eq!(pair.evaluate_energy(&Labeling(vec![0, 2])), 2.0);

        let sq = grid(2, 2, 3, Pairwise::AbsDiff(1.0), &[Direction::Horizontal]);
        assert_eq!(sq.num_edges(), 4);
        assert_eq!(sq.evaluate_energy(&Labeling(vec![0, 1, 2, 1])), 4.0);
    }

    #[test]
    fn feasibility_residuals() {
        let mut inst = grid(2, 1, 2, Pairwise::Potts(1.0), &[Direction::Horizontal]);
        inst.rays_mut()[0].target = 1;
        assert_eq!(inst.check_feasibility(&Labeling(vec![0, 0])), vec![1]);
        inst.rays_mut()[0].target = 3;
        for lab in [[0, 0], [0, 1], [1, 0], [1, 1]] {
            assert!(inst.check_feasibility(&Labeling(lab.to_vec()))[0] > 0);
        }
    }

    #[test]
    fn edge_index_matches_canonical_order() {
        let inst = grid(4, 3, 2, Pairwise::Potts(1.0), &[Direction::Horizontal]);
        for (i, e) in inst.edges().iter().enumerate() {
            assert_eq!(inst.edge_index(e.u, e.v), Some(i));
            assert_eq!(inst.edge_index(e.v, e.u), Some(i));
        }
        // row wrap is not an edge
        assert_eq!(inst.edge_index(3, 4), None);
        assert_eq!(inst.edge_index(0, 5), None);
    }

    #[test]
    fn validation_errors_name_fields() {
        let err = TomographyInstance::new(2, 2, 1, None, Pairwise::Potts(1.0), vec![]).unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "k"));
        let ray = Ray { nodes: vec![0, 7], target: 0, direction: Direction::None };
        let err = TomographyInstance::new(2, 2, 2, None, Pairwise::Potts(1.0), vec![ray]).unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "rays[0].nodes[1]"));
    }

    #[test]
    fn parse_direction_set() {
        assert_eq!(
            Direction::parse_set("hv").unwrap(),
            vec![Direction::Horizontal, Direction::Vertical]
        );
        assert_eq!(Direction::parse_set("hvdu").unwrap().len(), 4);
        assert!(Direction::parse_set("").is_err());
        assert!(Direction::parse_set("hx").is_err());
    }
}
