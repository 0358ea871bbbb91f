use std::collections::HashMap;
use std::fmt::Write as _;

use crate::catalog::{Catalog, ClassId};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationTriple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl RelationTriple {
    pub fn new(subject: &str, predicate: &str, object: &str) -> Self {
        RelationTriple {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
        }
    }
}

/// `subject<TAB>predicate<TAB>object` per line; `#` starts a comment.
pub fn parse_triples(text: &str, source: &str) -> Result<Vec<RelationTriple>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').map(str::trim).collect();
        if parts.len() != 3 || parts.iter().any(|p| p.is_empty()) {
            return Err(Error::parse(source, n + 1, "expected three non-empty tab-separated fields"));
        }
        out.push(RelationTriple::new(parts[0], parts[1], parts[2]));
    }
    Ok(out)
}

/// `surface<TAB>canonical` per line.
pub fn parse_aliases(text: &str, source: &str) -> Result<HashMap<String, String>> {
    let mut out = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').map(str::trim).collect();
        if parts.len() != 2 || parts.iter().any(|p| p.is_empty()) {
            return Err(Error::parse(source, n + 1, "expected `surface<TAB>canonical`"));
        }
        out.insert(parts[0].to_string(), parts[1].to_string());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    /// Node `k` is catalog class `node_order[k]`.
    pub node_order: Vec<ClassId>,
    pub adjacency: Matrix,
    pub normalized: Matrix,
    /// Triples dropped because a side did not resolve to a known class.
    pub skipped: usize,
}

impl KnowledgeGraph {
    /// Graph with no edges; its normalized adjacency is the identity.
    pub fn empty(n: usize) -> Self {
        let adjacency = Matrix::zeros(n, n);
        KnowledgeGraph {
            node_order: (0..n).collect(),
            normalized: normalize_adjacency(&adjacency),
            adjacency,
            skipped: 0,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.node_order.len()
    }

    pub fn num_edges(&self) -> usize {
        let n = self.num_nodes();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.adjacency[(i, j)] > 0.0)
            .count()
    }
}

fn compact(s: &str) -> String {
    s.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

struct Resolver<'a> {
    aliases: &'a HashMap<String, String>,
    catalog: &'a Catalog,
    compact_names: HashMap<String, ClassId>,
}

impl<'a> Resolver<'a> {
    fn new(aliases: &'a HashMap<String, String>, catalog: &'a Catalog) -> Self {
        let compact_names = catalog.classes().iter().map(|c| (compact(&c.name), c.id)).collect();
        Resolver {
            aliases,
            catalog,
            compact_names,
        }
    }

    /// Alias table first, then the exact class name, then a case- and
    /// punctuation-insensitive match.
    fn resolve(&self, surface: &str) -> Option<ClassId> {
        let canonical = self.aliases.get(surface).map(String::as_str).unwrap_or(surface);
        self.catalog
            .lookup(canonical)
            .or_else(|| self.compact_names.get(&compact(canonical)).copied())
    }
}

/// Builds the undirected single-relation graph. With `weighted`, edge weights
/// are triple counts symmetrized by max; otherwise edges are binary.
pub fn build_graph(
    triples: &[RelationTriple],
    aliases: &HashMap<String, String>,
    catalog: &Catalog,
    weighted: bool,
) -> KnowledgeGraph {
    let n = catalog.len();
    let resolver = Resolver::new(aliases, catalog);
    let mut counts = Matrix::zeros(n, n);
    let mut skipped = 0;
    for t in triples {
        match (resolver.resolve(&t.subject), resolver.resolve(&t.object)) {
            (Some(a), Some(b)) if a != b => counts[(a, b)] += 1.0,
            (Some(_), Some(_)) => {}
            _ => skipped += 1,
        }
    }
    let adjacency = Matrix::from_fn(n, n, |i, j| {
        let c = counts[(i, j)].max(counts[(j, i)]);
        if weighted {
            c
        } else if counts[(i, j)] + counts[(j, i)] > 0.0 {
            1.0
        } else {
            0.0
        }
    });
    KnowledgeGraph {
        node_order: (0..n).collect(),
        normalized: normalize_adjacency(&adjacency),
        adjacency,
        skipped,
    }
}

/// `D^{-1/2} (A + I) D^{-1/2}` with `D` the degree matrix of `A + I`.
pub fn normalize_adjacency(adjacency: &Matrix) -> Matrix {
    let n = adjacency.rows();
    let degree_isqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = adjacency.row(i).iter().sum::<f64>() + 1.0;
            1.0 / d.sqrt()
        })
        .collect();
    Matrix::from_fn(n, n, |i, j| {
        let a = adjacency[(i, j)] + if i == j { 1.0 } else { 0.0 };
        degree_isqrt[i] * a * degree_isqrt[j]
    })
}

/// Tab-separated matrix with class-name headers.
pub fn write_adjacency(graph: &KnowledgeGraph, catalog: &Catalog, normalized: bool) -> String {
    let m = if normalized { &graph.normalized } else { &graph.adjacency };
    let mut s = String::from("node");
    for &c in &graph.node_order {
        let _ = write!(s, "\t{}", catalog.name(c));
    }
    s.push('\n');
    for (i, &c) in graph.node_order.iter().enumerate() {
        s.push_str(catalog.name(c));
        for v in m.row(i) {
            let _ = write!(s, "\t{v}");
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::{BUILTIN_ALIASES, BUILTIN_TRIPLES};

    fn aliases(pairs: &[(&str, &str)]) -> HashMap<String, String> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn alias_pruning_links_canonical_classes() {
        let cat = Catalog::standard();
        let g = build_graph(
            &[RelationTriple::new("arm chairs", "near", "table top")],
            &aliases(&[("arm chairs", "ArmChair"), ("table top", "TableTop")]),
            &cat,
            false,
        );
        let (a, t) = (cat.id("ArmChair").unwrap(), cat.id("TableTop").unwrap());
        assert_eq!(g.adjacency[(a, t)], 1.0);
        assert_eq!(g.adjacency[(t, a)], 1.0);
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn empty_triples_normalize_to_identity() {
        let cat = Catalog::standard();
        let g = build_graph(&[], &HashMap::new(), &cat, false);
        assert_eq!(g.normalized, Matrix::identity(cat.len()));
    }

    #[test]
    fn two_node_single_edge() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let n = normalize_adjacency(&a);
        assert!(n.max_abs_diff(&Matrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]])) < 1e-15);
    }

    #[test]
    fn weighted_counts_symmetrize_by_max() {
        let cat = Catalog::standard();
        let t = |s, o| RelationTriple::new(s, "near", o);
        let g = build_graph(&[t("Mug", "Sink"), t("Mug", "Sink"), t("Sink", "Mug")], &HashMap::new(), &cat, true);
        let (m, s) = (cat.id("Mug").unwrap(), cat.id("Sink").unwrap());
        assert_eq!(g.adjacency[(m, s)], 2.0);
        assert_eq!(g.adjacency[(s, m)], 2.0);
    }

    #[test]
    fn unknown_sides_are_counted() {
        let cat = Catalog::standard();
        let g = build_graph(
            &[RelationTriple::new("unicorn", "on", "rainbow"), RelationTriple::new("mug", "in", "sink")],
            &HashMap::new(),
            &cat,
            false,
        );
        assert_eq!(g.skipped, 1);
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn builtin_data_parses() {
        let cat = Catalog::standard();
        let triples = parse_triples(BUILTIN_TRIPLES, "relations.tsv").unwrap();
        let aliases = parse_aliases(BUILTIN_ALIASES, "aliases.tsv").unwrap();
        let g = build_graph(&triples, &aliases, &cat, false);
        assert!(g.num_edges() > 40);
        assert_eq!(g.skipped, 2);
        assert!(parse_triples("a\tb\n", "x").is_err());
    }
}
