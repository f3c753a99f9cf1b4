use crate::chain::ChainSubproblem;
use crate::instance::{Labeling, NodeId, TomographyInstance};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubproblemKind {
    /// Chain along ray `i`, constrained to its target.
    Ray(usize),
    /// Chain covering grid edges no ray owns; no target.
    EnergyOnly,
}

/// Occurrence of a node inside a subproblem.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Member {
    pub sub: usize,
    pub pos: usize,
}

/// Splitting of the grid energy into chain subproblems that share nodes
/// but no edges.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub k: usize,
    pub num_nodes: usize,
    /// Subproblems with their base costs: owned edge tables and the unary
    /// of every node they own (zero elsewhere).
    pub subproblems: Vec<ChainSubproblem>,
    pub kinds: Vec<SubproblemKind>,
    /// Owning subproblem per canonical grid edge.
    pub edge_owner: Vec<usize>,
    /// Memberships per node, in increasing subproblem order.
    pub node_membership: Vec<Vec<Member>>,
    pub integral_costs: bool,
}

impl Decomposition {
    pub fn len(&self) -> usize {
        self.subproblems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subproblems.is_empty()
    }

    pub fn num_targeted(&self) -> usize {
        self.kinds.iter().filter(|k| matches!(k, SubproblemKind::Ray(_))).count()
    }

    /// Nodes appearing in more than one subproblem.
    pub fn shared_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.num_nodes).filter(|&u| self.node_membership[u].len() > 1)
    }

    /// Restriction of a full labeling to subproblem `i`.
    pub fn restrict(&self, i: usize, labeling: &Labeling) -> Vec<usize> {
        self.subproblems[i].node_ids.iter().map(|&u| labeling[u]).collect()
    }

    /// Sum of base subproblem energies (no multipliers).
    pub fn energy(&self, labeling: &Labeling) -> f64 {
        (0..self.len())
            .map(|i| self.subproblems[i].energy(&self.restrict(i, labeling)))
            .sum()
    }
}

/// One targeted chain per ray, plus energy-only chains for grid edges no
/// ray owns and for nodes no ray covers.
///
/// A ray owns the grid edge between two consecutive nodes when they are
/// 4-neighbours and no earlier ray owns it; other consecutive pairs get a
/// zero table. Unowned edges are collected into maximal runs along rows
/// (horizontal edges) and columns (vertical edges). Each unary goes to the
/// lowest-numbered subproblem containing its node.
pub fn decompose(instance: &TomographyInstance) -> Decomposition {
    let k = instance.k();
    let n = instance.num_nodes();
    let kk = k * k;
    let num_edges = instance.num_edges();
    let mut edge_owner = vec![usize::MAX; num_edges];
    let mut subproblems = Vec::new();
    let mut kinds = Vec::new();

    let oriented_table = |a: NodeId, b: NodeId, e: usize| -> Vec<f64> {
        let t = instance.pairwise_table(e);
        if a < b {
            t
        } else {
            let mut o = vec![0.0; kk];
            for xa in 0..k {
                for xb in 0..k {
                    o[xa * k + xb] = t[xb * k + xa];
                }
            }
            o
        }
    };

    for (r, ray) in instance.rays().iter().enumerate() {
        let id = subproblems.len();
        let mut pairwise = Vec::with_capacity(ray.len().saturating_sub(1) * kk);
        for w in ray.nodes.windows(2) {
            match instance.edge_index(w[0], w[1]) {
                Some(e) if edge_owner[e] == usize::MAX => {
                    edge_owner[e] = id;
                    pairwise.extend(oriented_table(w[0], w[1], e));
                }
                _ => pairwise.extend(std::iter::repeat_n(0.0, kk)),
            }
        }
        subproblems.push(ChainSubproblem::new(
            ray.nodes.clone(),
            k,
            vec![0.0; ray.len() * k],
            pairwise,
            Some(ray.target),
        ));
        kinds.push(SubproblemKind::Ray(r));
    }

    let (w, h) = (instance.width(), instance.height());
    let mut lines: Vec<Vec<NodeId>> = Vec::new();
    for y in 0..h {
        lines.push((0..w).map(|x| instance.node_id(x, y)).collect());
    }
    for x in 0..w {
        lines.push((0..h).map(|y| instance.node_id(x, y)).collect());
    }
    for line in &lines {
        let mut run: Vec<NodeId> = Vec::new();
        let mut flush = |run: &mut Vec<NodeId>, subproblems: &mut Vec<ChainSubproblem>, edge_owner: &mut Vec<usize>| {
            if run.len() >= 2 {
                let id = subproblems.len();
                let mut pairwise = Vec::with_capacity((run.len() - 1) * kk);
                for p in run.windows(2) {
                    let e = instance.edge_index(p[0], p[1]).unwrap();
                    edge_owner[e] = id;
                    pairwise.extend(oriented_table(p[0], p[1], e));
                }
                subproblems.push(ChainSubproblem::new(run.clone(), k, vec![0.0; run.len() * k], pairwise, None));
                kinds.push(SubproblemKind::EnergyOnly);
            }
            run.clear();
        };
        for p in line.windows(2) {
            let e = instance.edge_index(p[0], p[1]).unwrap();
            if edge_owner[e] == usize::MAX {
                if run.is_empty() {
                    run.push(p[0]);
                }
                run.push(p[1]);
            } else {
                flush(&mut run, &mut subproblems, &mut edge_owner);
            }
        }
        flush(&mut run, &mut subproblems, &mut edge_owner);
    }

    let mut node_membership = vec![Vec::new(); n];
    for (i, sub) in subproblems.iter().enumerate() {
        for (pos, &u) in sub.node_ids.iter().enumerate() {
            node_membership[u].push(Member { sub: i, pos });
        }
    }
    for u in 0..n {
        if node_membership[u].is_empty() {
            let id = subproblems.len();
            subproblems.push(ChainSubproblem::new(vec![u], k, vec![0.0; k], Vec::new(), None));
            kinds.push(SubproblemKind::EnergyOnly);
            node_membership[u].push(Member { sub: id, pos: 0 });
        }
    }
    for (u, members) in node_membership.iter().enumerate() {
        let owner = members[0];
        for x in 0..k {
            subproblems[owner.sub].unary_row_mut(owner.pos)[x] = instance.unary(u, x);
        }
    }
    debug_assert!(edge_owner.iter().all(|&o| o != usize::MAX));

    Decomposition {
        k,
        num_nodes: n,
        subproblems,
        kinds,
        edge_owner,
        node_membership,
        integral_costs: instance.has_integral_costs(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{build_lattice_rays, generate_random_instance, Direction, GeneratorConfig, Pairwise};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const HV: [Direction; 2] = [Direction::Horizontal, Direction::Vertical];
    const ALL: [Direction; 4] = [Direction::Horizontal, Direction::Vertical, Direction::DiagDown, Direction::DiagUp];

    fn instance(w: usize, h: usize, dirs: &[Direction]) -> TomographyInstance {
        TomographyInstance::new(w, h, 3, None, Pairwise::AbsDiff(1.0), build_lattice_rays(w, h, dirs)).unwrap()
    }

    fn owned_once(d: &Decomposition, inst: &TomographyInstance) {
        let mut count = vec![0; inst.num_edges()];
        for (i, sub) in d.subproblems.iter().enumerate() {
            for (p, w) in sub.node_ids.windows(2).enumerate() {
                if let Some(e) = inst.edge_index(w[0], w[1]) {
                    if d.edge_owner[e] == i {
                        count[e] += 1;
                        assert!(sub.pair_table(p).iter().any(|&c| c != 0.0));
                    }
                }
            }
        }
        assert!(count.iter().all(|&c| c == 1), "{count:?}");
    }

    #[test]
    fn four_by_four_rows_and_columns() {
        let inst = instance(4, 4, &HV);
        let d = decompose(&inst);
        assert_eq!(d.len(), 8);
        assert_eq!(d.num_targeted(), 8);
        assert_eq!(inst.num_edges(), 24);
        owned_once(&d, &inst);
    }

    #[test]
    fn rows_only_adds_energy_columns() {
        let inst = instance(3, 3, &[Direction::Horizontal]);
        let d = decompose(&inst);
        assert_eq!(d.num_targeted(), 3);
        assert_eq!(d.len(), 6);
        for i in 3..6 {
            assert_eq!(d.kinds[i], SubproblemKind::EnergyOnly);
            assert_eq!(d.subproblems[i].len(), 3);
            assert!(d.subproblems[i].target.is_none());
        }
        owned_once(&d, &inst);
    }

    #[test]
    fn two_by_two_all_directions() {
        let inst = instance(2, 2, &ALL);
        let d = decompose(&inst);
        let lens: Vec<usize> = d.subproblems.iter().map(ChainSubproblem::len).collect();
        // 2 rows, 2 columns, then (1, 2, 1) per diagonal direction
        assert_eq!(lens, vec![2, 2, 2, 2, 1, 2, 1, 1, 2, 1]);
        assert_eq!(d.num_targeted(), 10);
        for i in 4..10 {
            for p in 0..lens[i].saturating_sub(1) {
                assert!(d.subproblems[i].pair_table(p).iter().all(|&c| c == 0.0));
            }
        }
        owned_once(&d, &inst);
    }

    #[test]
    fn uncovered_nodes_get_singletons() {
        let rays = vec![crate::instance::Ray {
            nodes: vec![0, 1],
            target: 1,
            direction: Direction::None,
        }];
        let inst = TomographyInstance::new(3, 1, 2, None, Pairwise::Potts(1.0), rays).unwrap();
        let d = decompose(&inst);
        // ray (0,1), energy-only (1,2)
        assert_eq!(d.len(), 2);
        assert_eq!(d.subproblems[1].node_ids, vec![1, 2]);
        let inst = TomographyInstance::new(1, 1, 2, None, Pairwise::Potts(1.0), vec![]).unwrap();
        let d = decompose(&inst);
        assert_eq!(d.len(), 1);
        assert_eq!(d.node_membership[0].len(), 1);
    }

    #[test]
    fn energy_reconstructs_instance_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for seed in 0..30 {
            let dirs: &[Direction] = match seed % 3 {
                0 => &HV,
                1 => &ALL,
                _ => &[Direction::DiagUp],
            };
            let (mut inst, _) = generate_random_instance(&GeneratorConfig::new(seed, 5, 4, 3, dirs.to_vec())).unwrap();
            if seed % 2 == 0 {
                // asymmetric tables and unaries exercise orientation
                let tables = (0..inst.num_edges()).map(|_| (0..9).map(|_| rng.gen_range(0..5) as f64).collect()).collect();
                let unary = (0..20 * 3).map(|_| rng.gen_range(-3..4) as f64).collect();
                inst = TomographyInstance::new(5, 4, 3, Some(unary), Pairwise::Table(tables), inst.rays().to_vec()).unwrap();
            }
            let d = decompose(&inst);
            owned_once(&d, &inst);
            for _ in 0..10 {
                let lab = Labeling((0..20).map(|_| rng.gen_range(0..3)).collect());
                assert_eq!(d.energy(&lab), inst.evaluate_energy(&lab));
            }
        }
    }
}
