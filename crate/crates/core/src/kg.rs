//! ConceptNet-style knowledge graph: interned concepts and relations plus forward and
//! inverse adjacency in compressed sparse row form.
//!
//! Input is TSV, one triple per line: `relation<TAB>head<TAB>tail<TAB>weight`. A raw
//! ConceptNet assertion dump maps onto it by taking columns 2-4 of each assertion
//! (`/r/IsA`, `/c/en/dog/n`, `/c/en/animal`) and the `weight` field of the JSON info
//! column. URI forms are accepted directly: `/r/` is stripped from relations, concept
//! URIs are filtered by language and reduced to their term (`/c/en/fountain_pen/n` is
//! `fountain_pen`). Plain terms are lowercased and spaces become underscores.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConceptId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u32);

/// Orientation of a traversed edge relative to the stored triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeDir {
    /// head → tail
    Forward,
    /// tail → head
    Inverse,
}

impl EdgeDir {
    pub fn index(self) -> usize {
        match self {
            EdgeDir::Forward => 0,
            EdgeDir::Inverse => 1,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            EdgeDir::Forward => EdgeDir::Inverse,
            EdgeDir::Inverse => EdgeDir::Forward,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Out,
    In,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triple {
    pub head: ConceptId,
    pub relation: RelationId,
    pub tail: ConceptId,
    pub weight: f64,
}

/// One adjacency entry. In the out-index `concept` is the tail, in the in-index the head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjEntry {
    pub concept: ConceptId,
    pub relation: RelationId,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub relation: RelationId,
    pub concept: ConceptId,
    pub weight: f64,
    pub dir: EdgeDir,
}

/// Bidirectional string table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Interner {
    strings: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    pub fn intern(&mut self, s: &str) -> u32 {
        if let Some(&i) = self.index.get(s) {
            return i;
        }
        let i = self.strings.len() as u32;
        self.strings.push(s.to_owned());
        self.index.insert(s.to_owned(), i);
        i
    }

    pub fn get(&self, s: &str) -> Option<u32> {
        self.index.get(s).copied()
    }

    pub fn resolve(&self, i: u32) -> Option<&str> {
        self.strings.get(i as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &str)> {
        self.strings.iter().enumerate().map(|(i, s)| (i as u32, s.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    /// Language code kept from `/c/<lang>/...` URIs; plain terms always pass.
    pub language_prefix: String,
    pub relation_allowlist: Option<Vec<String>>,
    pub min_weight: Option<f64>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            language_prefix: "en".into(),
            relation_allowlist: None,
            min_weight: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadStats {
    pub lines: usize,
    pub concepts: usize,
    pub relations: usize,
    pub triples: usize,
    pub duplicates: usize,
    pub rejected_weight: usize,
    pub filtered: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    concepts: Interner,
    relations: Interner,
    triples: Vec<Triple>,
    out_offsets: Vec<usize>,
    out_adj: Vec<AdjEntry>,
    in_offsets: Vec<usize>,
    in_adj: Vec<AdjEntry>,
    isa: Option<RelationId>,
    stats: LoadStats,
}

/// Normalizes a concept field; `None` when it belongs to another language.
pub fn normalize_concept(raw: &str, language: &str) -> Option<String> {
    let term = if let Some(rest) = raw.strip_prefix("/c/") {
        let mut parts = rest.split('/');
        let lang = parts.next()?;
        if lang != language {
            return None;
        }
        parts.next()?
    } else {
        raw
    };
    let s: String = term
        .trim()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join("_");
    if s.is_empty() {
        None
    } else {
        Some(s)
    }
}

pub fn normalize_relation(raw: &str) -> String {
    raw.trim().strip_prefix("/r/").unwrap_or(raw.trim()).to_owned()
}

/// Accumulates triples, deduplicating on `(head, relation, tail)`; the first weight wins.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    concepts: Interner,
    relations: Interner,
    triples: Vec<Triple>,
    seen: HashSet<(u32, u32, u32)>,
    stats: LoadStats,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an already-normalized triple. Returns false for duplicates.
    pub fn add(&mut self, relation: &str, head: &str, tail: &str, weight: f64) -> bool {
        let h = self.concepts.intern(head);
        let r = self.relations.intern(relation);
        let t = self.concepts.intern(tail);
        if !self.seen.insert((h, r, t)) {
            self.stats.duplicates += 1;
            return false;
        }
        self.triples.push(Triple {
            head: ConceptId(h),
            relation: RelationId(r),
            tail: ConceptId(t),
            weight,
        });
        true
    }

    /// Registers a concept with no edges.
    pub fn add_concept(&mut self, c: &str) -> ConceptId {
        ConceptId(self.concepts.intern(c))
    }

    pub fn build(self) -> KnowledgeGraph {
        KnowledgeGraph::from_parts(self.concepts, self.relations, self.triples, self.stats)
    }
}

fn csr(n: usize, entries: impl Iterator<Item = (usize, AdjEntry)>) -> (Vec<usize>, Vec<AdjEntry>) {
    let mut buckets: Vec<Vec<AdjEntry>> = vec![Vec::new(); n];
    for (k, e) in entries {
        buckets[k].push(e);
    }
    let mut offsets = Vec::with_capacity(n + 1);
    let mut adj = Vec::new();
    offsets.push(0);
    for mut b in buckets {
        b.sort_by_key(|e| (e.concept, e.relation));
        adj.extend(b);
        offsets.push(adj.len());
    }
    (offsets, adj)
}

impl KnowledgeGraph {
    fn from_parts(
        concepts: Interner,
        relations: Interner,
        triples: Vec<Triple>,
        mut stats: LoadStats,
    ) -> Self {
        let n = concepts.len();
        let (out_offsets, out_adj) = csr(
            n,
            triples.iter().map(|t| {
                (
                    t.head.0 as usize,
                    AdjEntry {
                        concept: t.tail,
                        relation: t.relation,
                        weight: t.weight,
                    },
                )
            }),
        );
        let (in_offsets, in_adj) = csr(
            n,
            triples.iter().map(|t| {
                (
                    t.tail.0 as usize,
                    AdjEntry {
                        concept: t.head,
                        relation: t.relation,
                        weight: t.weight,
                    },
                )
            }),
        );
        let isa = relations
            .iter()
            .find(|(_, s)| s.eq_ignore_ascii_case("isa"))
            .map(|(i, _)| RelationId(i));
        stats.concepts = n;
        stats.relations = relations.len();
        stats.triples = triples.len();
        Self {
            concepts,
            relations,
            triples,
            out_offsets,
            out_adj,
            in_offsets,
            in_adj,
            isa,
            stats,
        }
    }

    pub fn empty() -> Self {
        GraphBuilder::new().build()
    }

    pub fn concept_count(&self) -> usize {
        self.concepts.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn stats(&self) -> LoadStats {
        self.stats
    }

    pub fn isa_relation(&self) -> Option<RelationId> {
        self.isa
    }

    pub fn concept_id(&self, s: &str) -> Option<ConceptId> {
        self.concepts.get(s).map(ConceptId)
    }

    pub fn concept_name(&self, c: ConceptId) -> Option<&str> {
        self.concepts.resolve(c.0)
    }

    pub fn relation_id(&self, s: &str) -> Option<RelationId> {
        self.relations.get(s).map(RelationId)
    }

    pub fn relation_name(&self, r: RelationId) -> Option<&str> {
        self.relations.resolve(r.0)
    }

    pub fn concepts(&self) -> &Interner {
        &self.concepts
    }

    pub fn relations(&self) -> &Interner {
        &self.relations
    }

    pub fn contains(&self, c: ConceptId) -> bool {
        (c.0 as usize) < self.concepts.len()
    }

    /// Outgoing edges of `c` sorted by `(tail, relation)`. Panics on an unknown id.
    pub fn out_edges(&self, c: ConceptId) -> &[AdjEntry] {
        let i = c.0 as usize;
        &self.out_adj[self.out_offsets[i]..self.out_offsets[i + 1]]
    }

    /// Incoming edges of `c` sorted by `(head, relation)`. Panics on an unknown id.
    pub fn in_edges(&self, c: ConceptId) -> &[AdjEntry] {
        let i = c.0 as usize;
        &self.in_adj[self.in_offsets[i]..self.in_offsets[i + 1]]
    }

    /// Edges of `c` traversable in either direction.
    pub fn edges_both(&self, c: ConceptId) -> impl Iterator<Item = Neighbor> + '_ {
        let wrap = |dir| {
            move |e: &AdjEntry| Neighbor {
                relation: e.relation,
                concept: e.concept,
                weight: e.weight,
                dir,
            }
        };
        self.out_edges(c)
            .iter()
            .map(wrap(EdgeDir::Forward))
            .chain(self.in_edges(c).iter().map(wrap(EdgeDir::Inverse)))
    }

    pub fn neighbors(&self, c: ConceptId, direction: Direction) -> Result<Vec<Neighbor>> {
        if !self.contains(c) {
            return Err(Error::UnknownConcept(c.0));
        }
        let mut out: Vec<Neighbor> = match direction {
            Direction::Out => self
                .edges_both(c)
                .filter(|n| n.dir == EdgeDir::Forward)
                .collect(),
            Direction::In => self
                .edges_both(c)
                .filter(|n| n.dir == EdgeDir::Inverse)
                .collect(),
            Direction::Both => self.edges_both(c).collect(),
        };
        out.sort_by_key(|n| (n.concept, n.relation, n.dir));
        Ok(out)
    }

    /// True when a triple connects `from` to `to` with `relation` in direction `dir`.
    pub fn has_edge(&self, from: ConceptId, relation: RelationId, to: ConceptId, dir: EdgeDir) -> bool {
        let list = match dir {
            EdgeDir::Forward => self.out_edges(from),
            EdgeDir::Inverse => self.in_edges(from),
        };
        list.binary_search_by_key(&(to, relation), |e| (e.concept, e.relation))
            .is_ok()
    }

    /// Distinct concepts linked to `c` by `IsA` in either direction, sorted, with the
    /// orientation of the connecting triple (`Forward` means `c IsA x`).
    pub fn isa_neighbors(&self, c: ConceptId) -> Vec<(ConceptId, EdgeDir)> {
        let Some(isa) = self.isa else { return Vec::new() };
        let mut out: Vec<(ConceptId, EdgeDir)> = self
            .edges_both(c)
            .filter(|n| n.relation == isa && n.concept != c)
            .map(|n| (n.concept, n.dir))
            .collect();
        // Forward sorts first, so dedup keeps `c IsA x` when both exist.
        out.sort();
        out.dedup_by_key(|(x, _)| *x);
        out
    }

    /// Loads a TSV edge list or a binary snapshot (detected by its magic bytes).
    pub fn load(path: &Path, opts: &LoadOptions) -> Result<Self> {
        let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut magic = [0u8; 4];
        let n = f.read(&mut magic).map_err(|e| Error::io(path, e))?;
        if n == 4 && &magic == SNAPSHOT_MAGIC {
            Self::load_snapshot(path)
        } else {
            load_kg(path, opts)
        }
    }
}

pub fn load_kg(path: &Path, opts: &LoadOptions) -> Result<KnowledgeGraph> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    load_kg_from_reader(BufReader::new(file), path, opts)
}

pub fn load_kg_from_reader<R: BufRead>(reader: R, path: &Path, opts: &LoadOptions) -> Result<KnowledgeGraph> {
    let allow: Option<HashSet<String>> = opts
        .relation_allowlist
        .as_ref()
        .map(|v| v.iter().map(|r| normalize_relation(r).to_lowercase()).collect());
    let mut b = GraphBuilder::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        b.stats.lines += 1;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: lineno,
                message: format!("expected 4 tab-separated columns, found {}", cols.len()),
            });
        }
        let weight: f64 = cols[3].trim().parse().map_err(|_| Error::Parse {
            path: path.to_owned(),
            line: lineno,
            message: format!("weight {:?} is not a number", cols[3]),
        })?;
        if !(weight.is_finite() && weight > 0.0) {
            b.stats.rejected_weight += 1;
            continue;
        }
        let relation = normalize_relation(cols[0]);
        if relation.is_empty() {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: lineno,
                message: "empty relation".into(),
            });
        }
        let passes_allow = allow
            .as_ref()
            .is_none_or(|a| a.contains(&relation.to_lowercase()));
        let passes_weight = opts.min_weight.is_none_or(|m| weight >= m);
        let head = normalize_concept(cols[1], &opts.language_prefix);
        let tail = normalize_concept(cols[2], &opts.language_prefix);
        match (head, tail) {
            (Some(h), Some(t)) if passes_allow && passes_weight => {
                b.add(&relation, &h, &t, weight);
            }
            _ => b.stats.filtered += 1,
        }
    }
    if b.stats.rejected_weight > 0 {
        log::warn!(
            "{}: rejected {} triples with non-positive weight",
            path.display(),
            b.stats.rejected_weight
        );
    }
    let kg = b.build();
    let s = kg.stats();
    log::info!(
        "{}: {} concepts, {} relations, {} triples ({} duplicates dropped)",
        path.display(),
        s.concepts,
        s.relations,
        s.triples,
        s.duplicates
    );
    if kg.isa.is_none() && kg.relation_count() > 0 {
        log::warn!("{}: no IsA relation, schema graph expansion will be a no-op", path.display());
    }
    Ok(kg)
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"SGKG";
const SNAPSHOT_VERSION: u32 = 1;

pub(crate) fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("invalid UTF-8".into()))
    }

    pub(crate) fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

impl KnowledgeGraph {
    /// Writes a versioned binary snapshot; indexes are rebuilt on load.
    pub fn save_snapshot(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let io = |e| Error::io(path, e);
        w.write_all(SNAPSHOT_MAGIC).map_err(io)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes()).map_err(io)?;
        for table in [&self.concepts, &self.relations] {
            w.write_all(&(table.len() as u64).to_le_bytes()).map_err(io)?;
            for (_, s) in table.iter() {
                write_str(&mut w, s).map_err(io)?;
            }
        }
        w.write_all(&(self.triples.len() as u64).to_le_bytes()).map_err(io)?;
        for t in &self.triples {
            w.write_all(&t.head.0.to_le_bytes()).map_err(io)?;
            w.write_all(&t.relation.0.to_le_bytes()).map_err(io)?;
            w.write_all(&t.tail.0.to_le_bytes()).map_err(io)?;
            w.write_all(&t.weight.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load_snapshot(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut r = ByteReader::new(&bytes);
        if r.take(4)? != SNAPSHOT_MAGIC {
            return Err(Error::Format("not a knowledge-graph snapshot".into()));
        }
        let version = r.u32()?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::Format(format!("unsupported snapshot version {version}")));
        }
        let mut tables = [Interner::default(), Interner::default()];
        for table in tables.iter_mut() {
            let n = r.u64()?;
            for _ in 0..n {
                let s = r.string()?;
                table.intern(&s);
            }
        }
        let [concepts, relations] = tables;
        let n = r.u64()? as usize;
        let mut triples = Vec::with_capacity(n);
        for _ in 0..n {
            let t = Triple {
                head: ConceptId(r.u32()?),
                relation: RelationId(r.u32()?),
                tail: ConceptId(r.u32()?),
                weight: r.f64()?,
            };
            if t.head.0 as usize >= concepts.len()
                || t.tail.0 as usize >= concepts.len()
                || t.relation.0 as usize >= relations.len()
            {
                return Err(Error::Format("triple references unknown id".into()));
            }
            triples.push(t);
        }
        if !r.done() {
            return Err(Error::Format("trailing bytes".into()));
        }
        Ok(Self::from_parts(concepts, relations, triples, LoadStats::default()))
    }
}
