//! Physical O-RAN substrate: radio heads (RH), edge servers (ES), regional
//! clouds (RC) and the direct links between them.
//!
//! Node ids are assigned in kind blocks: RHs first, then ESs, then RCs. The
//! `order` of a node is its index within its own block, which is also the
//! value the DU and CU action heads use to name a host.
//!
//! # Text format
//!
//! ```text
//! format oran-topology 1
//! spec n_rh=1 n_es=1 n_rc=1 split4_link_prob=0 ... seed=0
//! node id=0 kind=RH order=0 capacity=0
//! node id=1 kind=ES order=0 capacity=20
//! node id=2 kind=RC order=0 capacity=100
//! link a=0 b=1 kind=RH-ES bandwidth=21.5 delay=0.7
//! link a=1 b=2 kind=ES-RC bandwidth=33 delay=2.25
//! ```
//!
//! One record per line, `#` starts a comment. The `spec` record is optional
//! and carries the generator parameters. Floats are written in shortest
//! round-trip form, so `parse_topology(serialize_topology(g)) == g`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::Interval;

pub const FORMAT_HEADER: &str = "format oran-topology 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    #[serde(rename = "RH")]
    Rh,
    #[serde(rename = "ES")]
    Es,
    #[serde(rename = "RC")]
    Rc,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::Rh => "RH",
            NodeKind::Es => "ES",
            NodeKind::Rc => "RC",
        })
    }
}

impl FromStr for NodeKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "RH" => Ok(NodeKind::Rh),
            "ES" => Ok(NodeKind::Es),
            "RC" => Ok(NodeKind::Rc),
            other => Err(format!("unknown node kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkKind {
    #[serde(rename = "RH-ES")]
    RhEs,
    #[serde(rename = "ES-RC")]
    EsRc,
    #[serde(rename = "RH-RC")]
    RhRc,
}

impl LinkKind {
    fn endpoints(self) -> (NodeKind, NodeKind) {
        match self {
            LinkKind::RhEs => (NodeKind::Rh, NodeKind::Es),
            LinkKind::EsRc => (NodeKind::Es, NodeKind::Rc),
            LinkKind::RhRc => (NodeKind::Rh, NodeKind::Rc),
        }
    }
}

impl fmt::Display for LinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkKind::RhEs => "RH-ES",
            LinkKind::EsRc => "ES-RC",
            LinkKind::RhRc => "RH-RC",
        })
    }
}

impl FromStr for LinkKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "RH-ES" => Ok(LinkKind::RhEs),
            "ES-RC" => Ok(LinkKind::EsRc),
            "RH-RC" => Ok(LinkKind::RhRc),
            other => Err(format!("unknown link kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstrateNode {
    pub id: usize,
    pub kind: NodeKind,
    /// Compute capacity in CCs; zero for radio heads.
    pub capacity: f64,
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: usize,
    pub b: usize,
    /// Gbps.
    pub bandwidth: f64,
    /// Milliseconds.
    pub delay: f64,
    pub kind: LinkKind,
}

/// Generator parameters for a random substrate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySpec {
    pub n_rh: usize,
    pub n_es: usize,
    pub n_rc: usize,
    /// Per-RH probability of a direct RH-RC link (split 4 support).
    pub split4_link_prob: f64,
    /// Probability of each additional RH-ES pair beyond the mandatory one.
    pub rh_es_extra_prob: f64,
    /// Probability of each additional ES-RC pair beyond the mandatory one.
    pub es_rc_extra_prob: f64,
    pub link_bandwidth_gbps: Interval,
    pub link_delay_ms: Interval,
    pub direct_bandwidth_gbps: f64,
    pub direct_delay_ms: Interval,
    pub es_capacity: f64,
    pub rc_capacity: f64,
    pub seed: u64,
}

impl Default for TopologySpec {
    fn default() -> Self {
        Self {
            n_rh: 8,
            n_es: 3,
            n_rc: 2,
            split4_link_prob: 0.1,
            rh_es_extra_prob: 0.3,
            es_rc_extra_prob: 0.5,
            link_bandwidth_gbps: Interval(10.0, 40.0),
            link_delay_ms: Interval(0.0, 3.6),
            direct_bandwidth_gbps: 160.0,
            direct_delay_ms: Interval(0.1, 0.25),
            es_capacity: 20.0,
            rc_capacity: 100.0,
            seed: 0,
        }
    }
}

impl TopologySpec {
    pub fn new(n_rh: usize, n_es: usize, n_rc: usize, split4_link_prob: f64, seed: u64) -> Self {
        Self {
            n_rh,
            n_es,
            n_rc,
            split4_link_prob,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rh == 0 || self.n_es == 0 || self.n_rc == 0 {
            return Err(Error::Config(format!(
                "topology needs at least one node of each kind, got {} RH / {} ES / {} RC",
                self.n_rh, self.n_es, self.n_rc
            )));
        }
        for (name, p) in [
            ("split4_link_prob", self.split4_link_prob),
            ("rh_es_extra_prob", self.rh_es_extra_prob),
            ("es_rc_extra_prob", self.es_rc_extra_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is outside [0, 1]")));
            }
        }
        self.link_bandwidth_gbps.validate("link_bandwidth_gbps")?;
        self.link_delay_ms.validate("link_delay_ms")?;
        self.direct_delay_ms.validate("direct_delay_ms")?;
        if self.link_bandwidth_gbps.lo() < 0.0 || self.link_delay_ms.lo() < 0.0 {
            return Err(Error::Config("link ranges must be nonnegative".into()));
        }
        if !(self.direct_bandwidth_gbps >= 0.0 && self.es_capacity >= 0.0 && self.rc_capacity >= 0.0)
        {
            return Err(Error::Config(
                "capacities and direct bandwidth must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    fn to_record(&self) -> String {
        format!(
            "spec n_rh={} n_es={} n_rc={} split4_link_prob={} rh_es_extra_prob={} es_rc_extra_prob={} \
             link_bandwidth_gbps={},{} link_delay_ms={},{} direct_bandwidth_gbps={} direct_delay_ms={},{} \
             es_capacity={} rc_capacity={} seed={}",
            self.n_rh,
            self.n_es,
            self.n_rc,
            self.split4_link_prob,
            self.rh_es_extra_prob,
            self.es_rc_extra_prob,
            self.link_bandwidth_gbps.0,
            self.link_bandwidth_gbps.1,
            self.link_delay_ms.0,
            self.link_delay_ms.1,
            self.direct_bandwidth_gbps,
            self.direct_delay_ms.0,
            self.direct_delay_ms.1,
            self.es_capacity,
            self.rc_capacity,
            self.seed
        )
    }

    fn from_fields(fields: &Fields, line: usize) -> Result<Self> {
        let spec = Self {
            n_rh: fields.parse("n_rh", line)?,
            n_es: fields.parse("n_es", line)?,
            n_rc: fields.parse("n_rc", line)?,
            split4_link_prob: fields.parse("split4_link_prob", line)?,
            rh_es_extra_prob: fields.parse("rh_es_extra_prob", line)?,
            es_rc_extra_prob: fields.parse("es_rc_extra_prob", line)?,
            link_bandwidth_gbps: fields.interval("link_bandwidth_gbps", line)?,
            link_delay_ms: fields.interval("link_delay_ms", line)?,
            direct_bandwidth_gbps: fields.parse("direct_bandwidth_gbps", line)?,
            direct_delay_ms: fields.interval("direct_delay_ms", line)?,
            es_capacity: fields.parse("es_capacity", line)?,
            rc_capacity: fields.parse("rc_capacity", line)?,
            seed: fields.parse("seed", line)?,
        };
        spec.validate().map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        Ok(spec)
    }
}

/// Immutable substrate graph. Adjacency, delay and bandwidth lookups are
/// projections of `links`.
#[derive(Debug, Clone)]
pub struct SubstrateGraph {
    spec: Option<TopologySpec>,
    nodes: Vec<SubstrateNode>,
    links: Vec<Link>,
    n_rh: usize,
    n_es: usize,
    n_rc: usize,
    pair_index: HashMap<(usize, usize), usize>,
}

impl PartialEq for SubstrateGraph {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.nodes == other.nodes && self.links == other.links
    }
}

impl SubstrateGraph {
    /// Assembles a graph from explicit nodes and links, checking the
    /// structural invariants (kind blocks, no self-loops, no duplicate pairs,
    /// link kinds matching endpoint kinds). Connectivity is not required.
    pub fn from_parts(
        spec: Option<TopologySpec>,
        nodes: Vec<SubstrateNode>,
        links: Vec<Link>,
    ) -> Result<Self> {
        let mut counts = [0usize; 3];
        let mut last_kind = 0usize;
        for (i, node) in nodes.iter().enumerate() {
            let k = kind_rank(node.kind);
            if node.id != i {
                return Err(Error::Usage(format!("node at position {i} has id {}", node.id)));
            }
            if k < last_kind {
                return Err(Error::Usage(format!(
                    "node {i} of kind {} appears after a later kind block",
                    node.kind
                )));
            }
            last_kind = k;
            if node.order != counts[k] {
                return Err(Error::Usage(format!(
                    "node {i} has order {} but is {} #{} of its kind",
                    node.order, node.kind, counts[k]
                )));
            }
            if node.kind == NodeKind::Rh && node.capacity != 0.0 {
                return Err(Error::Usage(format!("radio head {i} must have zero capacity")));
            }
            if !(node.capacity >= 0.0 && node.capacity.is_finite()) {
                return Err(Error::Usage(format!("node {i} has invalid capacity {}", node.capacity)));
            }
            counts[k] += 1;
        }

        let mut pair_index = HashMap::with_capacity(links.len());
        for (idx, link) in links.iter().enumerate() {
            if link.a == link.b {
                return Err(Error::Usage(format!("link {idx} is a self-loop on node {}", link.a)));
            }
            let (ka, kb) = match (nodes.get(link.a), nodes.get(link.b)) {
                (Some(a), Some(b)) => (a.kind, b.kind),
                _ => {
                    return Err(Error::Usage(format!(
                        "link {idx} references a missing node ({}, {})",
                        link.a, link.b
                    )))
                }
            };
            if (ka, kb) != link.kind.endpoints() {
                return Err(Error::Usage(format!(
                    "link {idx} declared {} joins {ka} to {kb}",
                    link.kind
                )));
            }
            if !(link.bandwidth >= 0.0 && link.delay >= 0.0)
                || !link.bandwidth.is_finite()
                || !link.delay.is_finite()
            {
                return Err(Error::Usage(format!("link {idx} has invalid bandwidth or delay")));
            }
            let key = (link.a.min(link.b), link.a.max(link.b));
            if pair_index.insert(key, idx).is_some() {
                return Err(Error::Usage(format!(
                    "duplicate link between nodes {} and {}",
                    key.0, key.1
                )));
            }
        }

        Ok(Self {
            spec,
            nodes,
            links,
            n_rh: counts[0],
            n_es: counts[1],
            n_rc: counts[2],
            pair_index,
        })
    }

    pub fn spec(&self) -> Option<&TopologySpec> {
        self.spec.as_ref()
    }

    pub fn nodes(&self) -> &[SubstrateNode] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn n_rh(&self) -> usize {
        self.n_rh
    }

    pub fn n_es(&self) -> usize {
        self.n_es
    }

    pub fn n_rc(&self) -> usize {
        self.n_rc
    }

    pub fn es_id(&self, order: usize) -> usize {
        self.n_rh + order
    }

    pub fn rc_id(&self, order: usize) -> usize {
        self.n_rh + self.n_es + order
    }

    pub fn kind(&self, id: usize) -> Option<NodeKind> {
        self.nodes.get(id).map(|n| n.kind)
    }

    pub fn link_index(&self, a: usize, b: usize) -> Option<usize> {
        self.pair_index.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn link(&self, a: usize, b: usize) -> Option<&Link> {
        self.link_index(a, b).map(|i| &self.links[i])
    }

    /// RH `r` to the ES with the given order.
    pub fn rd_link(&self, r: usize, es_order: usize) -> Option<&Link> {
        self.link(r, self.es_id(es_order))
    }

    pub fn dc_link(&self, es_order: usize, rc_order: usize) -> Option<&Link> {
        self.link(self.es_id(es_order), self.rc_id(rc_order))
    }

    pub fn rc_link(&self, r: usize, rc_order: usize) -> Option<&Link> {
        self.link(r, self.rc_id(rc_order))
    }

    pub fn has_direct_rc(&self, r: usize) -> bool {
        (0..self.n_rc).any(|c| self.rc_link(r, c).is_some())
    }

    /// True iff `r`-`d` and `d`-`c` are both linked. Arguments are node ids.
    pub fn path_exists(&self, r: usize, d: usize, c: usize) -> Result<bool> {
        for (id, want) in [(r, NodeKind::Rh), (d, NodeKind::Es), (c, NodeKind::Rc)] {
            match self.kind(id) {
                Some(k) if k == want => {}
                Some(k) => {
                    return Err(Error::Usage(format!("node {id} is {k}, expected {want}")))
                }
                None => return Err(Error::Usage(format!("node {id} does not exist"))),
            }
        }
        Ok(self.link(r, d).is_some() && self.link(d, c).is_some())
    }

    /// Every RH has an ES neighbor, and at least one of those neighbors
    /// reaches an RC.
    pub fn check_feasible(&self) -> Result<()> {
        for r in 0..self.n_rh {
            let neighbors: Vec<usize> = (0..self.n_es)
                .filter(|&d| self.rd_link(r, d).is_some())
                .collect();
            if neighbors.is_empty() {
                return Err(Error::Config(format!("radio head {r} has no edge-server link")));
            }
            let reaches_rc = neighbors
                .iter()
                .any(|&d| (0..self.n_rc).any(|c| self.dc_link(d, c).is_some()));
            if !reaches_rc {
                return Err(Error::Config(format!(
                    "radio head {r} has no RU-DU-CU path to any regional cloud"
                )));
            }
        }
        Ok(())
    }
}

fn kind_rank(kind: NodeKind) -> usize {
    match kind {
        NodeKind::Rh => 0,
        NodeKind::Es => 1,
        NodeKind::Rc => 2,
    }
}

/// Draws a random substrate. Every RH gets one uniformly chosen ES plus
/// extra ES links with `rh_es_extra_prob`; every ES gets one uniformly chosen
/// RC plus extras with `es_rc_extra_prob`; each RH independently gets a
/// direct link to a uniformly chosen RC with `split4_link_prob`.
pub fn generate_topology(spec: &TopologySpec) -> Result<SubstrateGraph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut nodes = Vec::with_capacity(spec.n_rh + spec.n_es + spec.n_rc);
    let blocks = [
        (NodeKind::Rh, spec.n_rh, 0.0),
        (NodeKind::Es, spec.n_es, spec.es_capacity),
        (NodeKind::Rc, spec.n_rc, spec.rc_capacity),
    ];
    for (kind, count, capacity) in blocks {
        for order in 0..count {
            nodes.push(SubstrateNode {
                id: nodes.len(),
                kind,
                capacity,
                order,
            });
        }
    }
    let es_id = |d: usize| spec.n_rh + d;
    let rc_id = |c: usize| spec.n_rh + spec.n_es + c;

    let mut links = Vec::new();
    let cross_link = |rng: &mut ChaCha8Rng, a: usize, b: usize, kind: LinkKind| Link {
        a,
        b,
        bandwidth: spec.link_bandwidth_gbps.sample(rng),
        delay: spec.link_delay_ms.sample(rng),
        kind,
    };

    for r in 0..spec.n_rh {
        let primary = rng.random_range(0..spec.n_es);
        for d in 0..spec.n_es {
            if d == primary || rng.random_bool(spec.rh_es_extra_prob) {
                links.push(cross_link(&mut rng, r, es_id(d), LinkKind::RhEs));
            }
        }
    }
    for d in 0..spec.n_es {
        let primary = rng.random_range(0..spec.n_rc);
        for c in 0..spec.n_rc {
            if c == primary || rng.random_bool(spec.es_rc_extra_prob) {
                links.push(cross_link(&mut rng, es_id(d), rc_id(c), LinkKind::EsRc));
            }
        }
    }
    for r in 0..spec.n_rh {
        if rng.random_bool(spec.split4_link_prob) {
            let c = rng.random_range(0..spec.n_rc);
            links.push(Link {
                a: r,
                b: rc_id(c),
                bandwidth: spec.direct_bandwidth_gbps,
                delay: spec.direct_delay_ms.sample(&mut rng),
                kind: LinkKind::RhRc,
            });
        }
    }

    let graph = SubstrateGraph::from_parts(Some(spec.clone()), nodes, links)?;
    graph.check_feasible()?;
    Ok(graph)
}

pub fn serialize_topology(graph: &SubstrateGraph) -> String {
    let mut out = String::new();
    out.push_str(FORMAT_HEADER);
    out.push('\n');
    out.push_str(&format!(
        "# {} RH, {} ES, {} RC, {} links\n",
        graph.n_rh,
        graph.n_es,
        graph.n_rc,
        graph.links.len()
    ));
    if let Some(spec) = &graph.spec {
        out.push_str(&spec.to_record());
        out.push('\n');
    }
    for n in &graph.nodes {
        out.push_str(&format!(
            "node id={} kind={} order={} capacity={}\n",
            n.id, n.kind, n.order, n.capacity
        ));
    }
    for l in &graph.links {
        out.push_str(&format!(
            "link a={} b={} kind={} bandwidth={} delay={}\n",
            l.a, l.b, l.kind, l.bandwidth, l.delay
        ));
    }
    out
}

pub fn parse_topology(text: &str) -> Result<SubstrateGraph> {
    let mut saw_header = false;
    let mut spec = None;
    let mut nodes = Vec::new();
    let mut links = Vec::new();
    let mut link_lines = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if !saw_header {
            if content != FORMAT_HEADER {
                return Err(Error::Parse {
                    line,
                    message: format!("expected `{FORMAT_HEADER}`, found `{content}`"),
                });
            }
            saw_header = true;
            continue;
        }
        let (tag, rest) = content.split_once(char::is_whitespace).unwrap_or((content, ""));
        let fields = Fields::split(rest, line)?;
        match tag {
            "spec" => {
                if spec.is_some() {
                    return Err(Error::Parse {
                        line,
                        message: "duplicate spec record".into(),
                    });
                }
                spec = Some(TopologySpec::from_fields(&fields, line)?);
            }
            "node" => nodes.push(SubstrateNode {
                id: fields.parse("id", line)?,
                kind: fields.parse("kind", line)?,
                order: fields.parse("order", line)?,
                capacity: fields.parse("capacity", line)?,
            }),
            "link" => {
                links.push(Link {
                    a: fields.parse("a", line)?,
                    b: fields.parse("b", line)?,
                    kind: fields.parse("kind", line)?,
                    bandwidth: fields.parse("bandwidth", line)?,
                    delay: fields.parse("delay", line)?,
                });
                link_lines.push(line);
            }
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown record type `{other}`"),
                })
            }
        }
        fields.finish(line)?;
    }

    if !saw_header {
        return Err(Error::Parse {
            line: 1,
            message: "empty document".into(),
        });
    }
    if nodes.is_empty() {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            message: "document has no node records".into(),
        });
    }

    // Report duplicates against the offending line before structural checks.
    let mut seen = HashMap::new();
    for (l, &line) in links.iter().zip(&link_lines) {
        if let Some(first) = seen.insert((l.a.min(l.b), l.a.max(l.b)), line) {
            return Err(Error::Parse {
                line,
                message: format!(
                    "duplicate link between nodes {} and {} (first declared on line {first})",
                    l.a.min(l.b),
                    l.a.max(l.b)
                ),
            });
        }
    }

    SubstrateGraph::from_parts(spec, nodes, links).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })
}

/// `key=value` pairs of one record, with use tracking so unknown keys are
/// rejected.
struct Fields<'a> {
    pairs: Vec<(&'a str, &'a str)>,
    used: std::cell::RefCell<Vec<bool>>,
}

impl<'a> Fields<'a> {
    fn split(rest: &'a str, line: usize) -> Result<Self> {
        let mut pairs = Vec::new();
        for token in rest.split_whitespace() {
            let (k, v) = token.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected key=value, found `{token}`"),
            })?;
            if pairs.iter().any(|(seen, _)| *seen == k) {
                return Err(Error::Parse {
                    line,
                    message: format!("field `{k}` given twice"),
                });
            }
            pairs.push((k, v));
        }
        let used = std::cell::RefCell::new(vec![false; pairs.len()]);
        Ok(Self { pairs, used })
    }

    fn raw(&self, key: &str, line: usize) -> Result<&'a str> {
        let pos = self
            .pairs
            .iter()
            .position(|(k, _)| *k == key)
            .ok_or_else(|| Error::Parse {
                line,
                message: format!("missing field `{key}`"),
            })?;
        self.used.borrow_mut()[pos] = true;
        Ok(self.pairs[pos].1)
    }

    fn parse<T: FromStr>(&self, key: &str, line: usize) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let raw = self.raw(key, line)?;
        raw.parse().map_err(|e: T::Err| Error::Parse {
            line,
            message: format!("field `{key}`: cannot parse `{raw}`: {e}"),
        })
    }

    fn interval(&self, key: &str, line: usize) -> Result<Interval> {
        let raw = self.raw(key, line)?;
        let bad = || Error::Parse {
            line,
            message: format!("field `{key}`: expected `lo,hi`, found `{raw}`"),
        };
        let (lo, hi) = raw.split_once(',').ok_or_else(bad)?;
        Ok(Interval(
            lo.parse().map_err(|_| bad())?,
            hi.parse().map_err(|_| bad())?,
        ))
    }

    fn finish(&self, line: usize) -> Result<()> {
        let used = self.used.borrow();
        if let Some(pos) = used.iter().position(|u| !u) {
            return Err(Error::Parse {
                line,
                message: format!("unknown field `{}`", self.pairs[pos].0),
            });
        }
        Ok(())
    }
}
