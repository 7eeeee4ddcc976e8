//! DAG representation, ground-truth Markov boundaries, moral graphs.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use crate::error::{CoreError, Result};

/// A directed acyclic graph over `d` variables with optional edge weights.
///
/// Indices are 0-based everywhere. A topological order is computed eagerly on
/// construction; cyclic edge sets are rejected. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Dag {
    d: usize,
    edges: BTreeSet<(usize, usize)>,
    weights: BTreeMap<(usize, usize), f64>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    topo_order: Vec<usize>,
}

impl Dag {
    /// Builds a DAG from an edge list. Rejects out-of-range indices,
    /// self-loops, duplicate edges and cycles.
    pub fn new(d: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if d == 0 {
            return Err(CoreError::InvalidParameter {
                name: "d",
                reason: "variable count must be >= 1".into(),
            });
        }
        let mut set = BTreeSet::new();
        let mut parents = vec![Vec::new(); d];
        let mut children = vec![Vec::new(); d];
        for (p, c) in edges {
            if p >= d {
                return Err(CoreError::IndexOutOfRange { index: p, d });
            }
            if c >= d {
                return Err(CoreError::IndexOutOfRange { index: c, d });
            }
            if p == c {
                return Err(CoreError::InvalidEdge {
                    parent: p,
                    child: c,
                    reason: "self-loop".into(),
                });
            }
            if !set.insert((p, c)) {
                return Err(CoreError::InvalidEdge {
                    parent: p,
                    child: c,
                    reason: "duplicate edge".into(),
                });
            }
            parents[c].push(p);
            children[p].push(c);
        }
        for v in parents.iter_mut().chain(children.iter_mut()) {
            v.sort_unstable();
        }
        let topo_order = topological_order(d, &children)?;
        Ok(Dag {
            d,
            edges: set,
            weights: BTreeMap::new(),
            parents,
            children,
            topo_order,
        })
    }

    /// Same as [`Dag::new`] but attaches a weight to every edge.
    pub fn with_weights(
        d: usize,
        weighted_edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut edges = Vec::new();
        let mut weights = BTreeMap::new();
        for (p, c, w) in weighted_edges {
            edges.push((p, c));
            weights.insert((p, c), w);
        }
        let mut dag = Dag::new(d, edges)?;
        dag.weights = weights;
        Ok(dag)
    }

    /// Replaces the weight map. Every key must be an existing edge.
    pub fn set_weights(&mut self, weights: BTreeMap<(usize, usize), f64>) -> Result<()> {
        for &(p, c) in weights.keys() {
            if !self.edges.contains(&(p, c)) {
                return Err(CoreError::InvalidEdge {
                    parent: p,
                    child: c,
                    reason: "weight refers to a non-edge".into(),
                });
            }
        }
        self.weights = weights;
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, parent: usize, child: usize) -> bool {
        self.edges.contains(&(parent, child))
    }

    pub fn weight(&self, parent: usize, child: usize) -> Option<f64> {
        self.weights.get(&(parent, child)).copied()
    }

    pub fn weights(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.weights
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    /// Variables in a topological order (parents before children).
    pub fn topological_order(&self) -> &[usize] {
        &self.topo_order
    }
}

fn topological_order(d: usize, children: &[Vec<usize>]) -> Result<Vec<usize>> {
    let mut indegree = vec![0usize; d];
    for ch in children {
        for &c in ch {
            indegree[c] += 1;
        }
    }
    let mut queue: std::collections::VecDeque<usize> = (0..d).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(d);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                queue.push_back(c);
            }
        }
    }
    if order.len() != d {
        return Err(CoreError::CyclicGraph);
    }
    Ok(order)
}

/// True Markov boundary of `target`: parents, children and spouses
/// (co-parents of the target's children), excluding the target itself.
pub fn markov_boundary_of(dag: &Dag, target: usize) -> Result<BTreeSet<usize>> {
    if target >= dag.d() {
        return Err(CoreError::IndexOutOfRange {
            index: target,
            d: dag.d(),
        });
    }
    let mut mb = BTreeSet::new();
    mb.extend(dag.parents(target).iter().copied());
    mb.extend(dag.children(target).iter().copied());
    for &child in dag.children(target) {
        for &spouse in dag.parents(child) {
            if spouse != target {
                mb.insert(spouse);
            }
        }
    }
    mb.remove(&target);
    Ok(mb)
}

/// Undirected moral graph: symmetric 0/1 adjacency with zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoralGraph {
    d: usize,
    adj: Vec<Vec<u8>>,
}

impl MoralGraph {
    fn empty(d: usize) -> Self {
        MoralGraph {
            d,
            adj: vec![vec![0; d]; d],
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i][j] == 1
    }

    pub fn adjacency(&self) -> &[Vec<u8>] {
        &self.adj
    }

    pub fn edge_count(&self) -> usize {
        let mut n = 0;
        for i in 0..self.d {
            for j in (i + 1)..self.d {
                n += self.adj[i][j] as usize;
            }
        }
        n
    }

    fn connect(&mut self, i: usize, j: usize) {
        if i != j {
            self.adj[i][j] = 1;
            self.adj[j][i] = 1;
        }
    }

    /// Writes the dense 0/1 adjacency as CSV rows (no header).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for row in &self.adj {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
        f.write_all(out.as_bytes())
            .map_err(|e| CoreError::io(path.display().to_string(), e))
    }
}

/// Moral graph of a DAG: every variable is connected to its Markov boundary.
pub fn moralize(dag: &Dag) -> MoralGraph {
    let mut g = MoralGraph::empty(dag.d());
    for i in 0..dag.d() {
        // target in range by construction
        let mb = markov_boundary_of(dag, i).expect("valid index");
        for j in mb {
            g.connect(i, j);
        }
    }
    g
}

/// Symmetrized union of per-target Markov-boundary predictions:
/// `adj[i][j] = 1` iff `j ∈ mb_map[i]` or `i ∈ mb_map[j]`.
pub fn moral_from_mbs(mb_map: &BTreeMap<usize, BTreeSet<usize>>, d: usize) -> Result<MoralGraph> {
    let mut g = MoralGraph::empty(d);
    for (&i, members) in mb_map {
        if i >= d {
            return Err(CoreError::IndexOutOfRange { index: i, d });
        }
        for &j in members {
            if j >= d {
                return Err(CoreError::IndexOutOfRange { index: j, d });
            }
            g.connect(i, j);
        }
    }
    Ok(g)
}

/// Writes a DAG as a CSV edge list with a `# d=<n>` sidecar line so isolated
/// nodes survive a round trip. The weight column is included only when the
/// DAG carries weights.
pub fn write_dag_csv(dag: &Dag, path: &Path) -> Result<()> {
    let mut out = format!("# d={}\n", dag.d());
    let weighted = !dag.weights.is_empty();
    if weighted {
        out.push_str("parent,child,weight\n");
    } else {
        out.push_str("parent,child\n");
    }
    for (p, c) in dag.edges() {
        if weighted {
            let w = dag.weight(p, c).unwrap_or(1.0);
            out.push_str(&format!("{p},{c},{w}\n"));
        } else {
            out.push_str(&format!("{p},{c}\n"));
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    f.write_all(out.as_bytes())
        .map_err(|e| CoreError::io(path.display().to_string(), e))
}

/// Reads a DAG file in either accepted layout:
/// an edge list (`# d=<n>` line, `parent,child[,weight]` header) or a dense
/// d×d matrix with rows as parents, where any non-zero entry is an edge.
pub fn read_dag_csv(path: &Path) -> Result<Dag> {
    let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let p = path.display().to_string();
    let mut lines = text.lines().peekable();

    let mut d_hint: Option<usize> = None;
    while let Some(line) = lines.peek() {
        let t = line.trim();
        if t.is_empty() {
            lines.next();
            continue;
        }
        if let Some(rest) = t.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("d=") {
                d_hint = Some(v.trim().parse().map_err(|_| {
                    CoreError::malformed(&p, format!("bad sidecar line: {t}"))
                })?);
            }
            lines.next();
            continue;
        }
        break;
    }

    let body: Vec<&str> = lines.filter(|l| !l.trim().is_empty()).collect();
    if body.is_empty() {
        let d = d_hint.ok_or_else(|| CoreError::malformed(&p, "empty file without # d= line"))?;
        return Dag::new(d, std::iter::empty());
    }

    let header = body[0].trim().to_ascii_lowercase();
    if header.starts_with("parent,child") {
        let with_weight = header.contains("weight");
        let mut edges = Vec::new();
        for (ln, line) in body.iter().enumerate().skip(1) {
            let cells: Vec<&str> = line.trim().split(',').collect();
            if cells.len() < 2 {
                return Err(CoreError::malformed(&p, format!("row {} too short", ln + 1)));
            }
            let parent: usize = cells[0].trim().parse().map_err(|_| {
                CoreError::malformed(&p, format!("bad parent index on row {}", ln + 1))
            })?;
            let child: usize = cells[1].trim().parse().map_err(|_| {
                CoreError::malformed(&p, format!("bad child index on row {}", ln + 1))
            })?;
            let weight = if with_weight && cells.len() > 2 {
                cells[2].trim().parse().map_err(|_| {
                    CoreError::malformed(&p, format!("bad weight on row {}", ln + 1))
                })?
            } else {
                1.0
            };
            edges.push((parent, child, weight));
        }
        let d = d_hint.unwrap_or_else(|| {
            edges
                .iter()
                .map(|&(a, b, _)| a.max(b) + 1)
                .max()
                .unwrap_or(0)
        });
        if with_weight {
            Dag::with_weights(d, edges)
        } else {
            Dag::new(d, edges.into_iter().map(|(a, b, _)| (a, b)))
        }
    } else {
        // Dense matrix: row index = parent, non-zero entry = edge.
        let rows: Vec<Vec<f64>> = body
            .iter()
            .enumerate()
            .map(|(ln, line)| {
                line.trim()
                    .split(',')
                    .map(|c| {
                        c.trim().parse::<f64>().map_err(|_| {
                            CoreError::malformed(&p, format!("bad matrix entry on row {}", ln + 1))
                        })
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let d = rows.len();
        let mut edges = Vec::new();
        let mut any_nonunit = false;
        for (parent, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(CoreError::malformed(
                    &p,
                    format!("matrix row {} has {} entries, expected {d}", parent + 1, row.len()),
                ));
            }
            for (child, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    if v != 1.0 {
                        any_nonunit = true;
                    }
                    edges.push((parent, child, v));
                }
            }
        }
        if any_nonunit {
            Dag::with_weights(d, edges)
        } else {
            Dag::new(d, edges.into_iter().map(|(a, b, _)| (a, b)))
        }
    }
}
