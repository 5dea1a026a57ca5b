//! Rule-driven conversion between OJS native XML and Articulatus XML.
//!
//! A rule table is plain text, one rule per line:
//!
//! ```text
//! # source path                -> target path                            : transform
//! article/title[@locale]       -> article/artTitles/artTitle[@lang]      : locale-map
//! article/author[*]            -> article/authors/author[*][@num=#]/individInfo[@lang=RUS]/initials : initials
//! -                            -> article/artType                        : constant(PRC)
//! ```
//!
//! Path segments are element names with optional predicates:
//!
//! * `[*]` iterates every matching element; the n-th source instance maps to
//!   the n-th target instance.
//! * `[N]` (target only) addresses the existing N-th element, 1-based; the
//!   rule is skipped when it does not exist.
//! * `[@name=value]` matches (source) or sets (target) an attribute. In a
//!   target, the value `#` stands for the zero-padded position of the element.
//! * `[@name]` carries an attribute value from source to target.
//!
//! Rules run in file order, which also fixes the order of created elements.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::articulatus::{parse_articulatus, wrap_articles, ArticulatusError};
use crate::model::{
    initials_of, split_initials, split_keywords, ArticleRecord, Author, LangCode, LocaleMap,
};
use crate::ojs::{parse_ojs, OjsError};
use crate::xml::{self, Element, Node};

pub const DEFAULT_OJS_TO_NEB: &str = include_str!("../rules/ojs_to_neb.rules");
pub const DEFAULT_NEB_TO_OJS: &str = include_str!("../rules/neb_to_ojs.rules");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CrosswalkError {
    #[error("rule table line {line}: {reason}")]
    RuleConflict { line: usize, reason: String },
    #[error(transparent)]
    Ojs(#[from] OjsError),
    #[error(transparent)]
    Articulatus(#[from] ArticulatusError),
    #[error("rule on line {line}: <{element}> lacks attribute `{attr}`")]
    MissingAttribute {
        line: usize,
        element: String,
        attr: String,
    },
    #[error("rule on line {line}: cannot map language `{value}`")]
    BadLangAttribute { line: usize, value: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transform {
    Identity,
    LocaleMap,
    Initials,
    SplitName,
    Constant(String),
    JoinKeywords,
}

impl Transform {
    fn parse(text: &str) -> Option<Transform> {
        Some(match text {
            "identity" => Transform::Identity,
            "locale-map" => Transform::LocaleMap,
            "initials" => Transform::Initials,
            "split-name" => Transform::SplitName,
            "join-keywords" => Transform::JoinKeywords,
            _ => {
                let value = text.strip_prefix("constant(")?.strip_suffix(')')?;
                Transform::Constant(value.to_string())
            }
        })
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Identity => f.write_str("identity"),
            Transform::LocaleMap => f.write_str("locale-map"),
            Transform::Initials => f.write_str("initials"),
            Transform::SplitName => f.write_str("split-name"),
            Transform::Constant(v) => write!(f, "constant({v})"),
            Transform::JoinKeywords => f.write_str("join-keywords"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum AttrPred {
    Carry(String),
    Literal(String, String),
    Position(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSegment {
    name: String,
    repeat: bool,
    nth: Option<usize>,
    attrs: Vec<AttrPred>,
}

impl PathSegment {
    fn carry(&self) -> Option<&str> {
        self.attrs.iter().find_map(|a| match a {
            AttrPred::Carry(n) => Some(n.as_str()),
            _ => None,
        })
    }

    fn matches(&self, el: &Element) -> bool {
        el.name == self.name
            && self.attrs.iter().all(|a| match a {
                AttrPred::Literal(k, v) => el.attr(k) == Some(v.as_str()),
                _ => true,
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementPath {
    segments: Vec<PathSegment>,
}

impl ElementPath {
    fn parse(text: &str) -> Result<ElementPath, String> {
        let mut segments = Vec::new();
        for raw in text.split('/') {
            let name_end = raw.find('[').unwrap_or(raw.len());
            let name = &raw[..name_end];
            if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || "_-.".contains(c)) {
                return Err(format!("bad element name in `{raw}`"));
            }
            let mut seg = PathSegment {
                name: name.to_string(),
                repeat: false,
                nth: None,
                attrs: Vec::new(),
            };
            let mut rest = &raw[name_end..];
            while !rest.is_empty() {
                let close = rest
                    .find(']')
                    .filter(|_| rest.starts_with('['))
                    .ok_or_else(|| format!("bad predicate in `{raw}`"))?;
                let pred = &rest[1..close];
                rest = &rest[close + 1..];
                if pred == "*" {
                    seg.repeat = true;
                } else if let Some(attr) = pred.strip_prefix('@') {
                    seg.attrs.push(match attr.split_once('=') {
                        Some((k, "#")) => AttrPred::Position(k.to_string()),
                        Some((k, v)) => AttrPred::Literal(k.to_string(), v.to_string()),
                        None => AttrPred::Carry(attr.to_string()),
                    });
                } else if let Ok(n) = pred.parse::<usize>() {
                    if n == 0 {
                        return Err("positions are 1-based".to_string());
                    }
                    seg.nth = Some(n);
                } else {
                    return Err(format!("unknown predicate `[{pred}]`"));
                }
            }
            if seg.repeat && seg.nth.is_some() {
                return Err(format!("`{raw}` mixes [*] and a position"));
            }
            segments.push(seg);
        }
        Ok(ElementPath { segments })
    }

    fn stars(&self) -> usize {
        self.segments.iter().filter(|s| s.repeat).count()
    }

    fn last(&self) -> &PathSegment {
        self.segments.last().expect("paths are never empty")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrosswalkRule {
    pub source_path: Option<String>,
    pub target_path: String,
    pub transform: Transform,
    pub line: usize,
    source: Option<ElementPath>,
    target: ElementPath,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleTable {
    pub rules: Vec<CrosswalkRule>,
}

impl RuleTable {
    pub fn parse(text: &str) -> Result<RuleTable, CrosswalkError> {
        let mut rules: Vec<CrosswalkRule> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let conflict = |reason: String| CrosswalkError::RuleConflict { line, reason };
            let (source_text, rest) = content
                .split_once("->")
                .ok_or_else(|| conflict("expected `source -> target : transform`".into()))?;
            let (target_text, transform_text) = rest
                .split_once(" : ")
                .ok_or_else(|| conflict("expected `: transform` after the target path".into()))?;
            let source_text = source_text.trim();
            let target_text = target_text.trim();
            let transform = Transform::parse(transform_text.trim())
                .ok_or_else(|| conflict(format!("unknown transform `{}`", transform_text.trim())))?;
            let source = if source_text == "-" {
                None
            } else {
                Some(ElementPath::parse(source_text).map_err(conflict)?)
            };
            let target = ElementPath::parse(target_text).map_err(conflict)?;

            match (&transform, &source) {
                (Transform::Constant(_), Some(_)) => {
                    return Err(conflict("constant rules take `-` as source".into()))
                }
                (Transform::Constant(_), None) => {}
                (_, None) => return Err(conflict(format!("{transform} needs a source path"))),
                _ => {}
            }
            if let Some(src) = &source {
                if src.segments.iter().any(|s| s.nth.is_some()) {
                    return Err(conflict("positions are only allowed in target paths".into()));
                }
                if src.segments.iter().any(|s| s.attrs.iter().any(|a| matches!(a, AttrPred::Position(_)))) {
                    return Err(conflict("`#` is only allowed in target paths".into()));
                }
                if target.stars() > src.stars() {
                    return Err(conflict("target has more [*] segments than the source".into()));
                }
            } else if target.stars() > 0 {
                return Err(conflict("constant targets cannot iterate".into()));
            }
            if transform == Transform::LocaleMap
                && (source.as_ref().is_none_or(|s| s.last().carry().is_none()) || target.last().carry().is_none())
            {
                return Err(conflict("locale-map needs `[@attr]` on both last segments".into()));
            }
            if let Some(prev) = rules.iter().find(|r| r.target_path == target_text) {
                return Err(conflict(format!(
                    "target `{target_text}` already mapped on line {}",
                    prev.line
                )));
            }
            if let Some(first) = rules.first() {
                if first.target.segments[0].name != target.segments[0].name {
                    return Err(conflict("all targets must share one root element".into()));
                }
                if let (Some(a), Some(b)) = (rules.iter().find_map(|r| r.source.as_ref()), &source) {
                    if a.segments[0].name != b.segments[0].name {
                        return Err(conflict("all sources must share one root element".into()));
                    }
                }
            }
            rules.push(CrosswalkRule {
                source_path: (source_text != "-").then(|| source_text.to_string()),
                target_path: target_text.to_string(),
                transform,
                line,
                source,
                target,
            });
        }
        Ok(RuleTable { rules })
    }

    pub fn ojs_to_neb() -> RuleTable {
        RuleTable::parse(DEFAULT_OJS_TO_NEB).expect("bundled rule table is valid")
    }

    pub fn neb_to_ojs() -> RuleTable {
        RuleTable::parse(DEFAULT_NEB_TO_OJS).expect("bundled rule table is valid")
    }

    pub fn target_root(&self) -> Option<&str> {
        self.rules.first().map(|r| r.target.segments[0].name.as_str())
    }

    /// Converts one source unit (an `<article>` element) into a target unit.
    pub fn apply(&self, unit: &Element, locales: &LocaleMap) -> Result<Element, CrosswalkError> {
        let root_name = self.target_root().unwrap_or("article");
        let mut out = Element::new(root_name);
        for rule in &self.rules {
            rule.apply(unit, &mut out, locales)?;
        }
        Ok(out)
    }
}

struct Match<'a> {
    node: &'a Element,
    indices: Vec<usize>,
    carried: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum LastStep {
    Append,
    FindOrCreate,
}

impl CrosswalkRule {
    fn select<'a>(&self, unit: &'a Element) -> Result<Vec<Match<'a>>, CrosswalkError> {
        let mut out = Vec::new();
        let Some(path) = &self.source else {
            return Ok(out);
        };
        let first = &path.segments[0];
        if !first.matches(unit) {
            return Ok(out);
        }
        self.descend(unit, &path.segments[1..], Vec::new(), None, &mut out)?;
        if path.segments.len() == 1 {
            out.push(Match {
                node: unit,
                indices: Vec::new(),
                carried: self.carried_from(first, unit)?,
            });
        }
        Ok(out)
    }

    fn descend<'a>(
        &self,
        el: &'a Element,
        segs: &[PathSegment],
        indices: Vec<usize>,
        carried: Option<String>,
        out: &mut Vec<Match<'a>>,
    ) -> Result<(), CrosswalkError> {
        let Some((seg, rest)) = segs.split_first() else {
            return Ok(());
        };
        let candidates: Vec<&Element> = el.elements().filter(|c| seg.matches(c)).collect();
        let chosen: Vec<(Option<usize>, &Element)> = if seg.repeat {
            candidates.into_iter().enumerate().map(|(i, c)| (Some(i), c)).collect()
        } else if rest.is_empty() {
            candidates.into_iter().map(|c| (None, c)).collect()
        } else {
            candidates.into_iter().take(1).map(|c| (None, c)).collect()
        };
        for (index, child) in chosen {
            let mut idx = indices.clone();
            idx.extend(index);
            let carried = self.carried_from(seg, child)?.or_else(|| carried.clone());
            if rest.is_empty() {
                out.push(Match {
                    node: child,
                    indices: idx,
                    carried,
                });
            } else {
                self.descend(child, rest, idx, carried, out)?;
            }
        }
        Ok(())
    }

    fn carried_from(&self, seg: &PathSegment, el: &Element) -> Result<Option<String>, CrosswalkError> {
        match seg.carry() {
            None => Ok(None),
            Some(attr) => el
                .attr(attr)
                .map(|v| Some(v.to_string()))
                .ok_or_else(|| CrosswalkError::MissingAttribute {
                    line: self.line,
                    element: el.name.clone(),
                    attr: attr.to_string(),
                }),
        }
    }

    fn map_lang(&self, value: &str, locales: &LocaleMap) -> Result<String, CrosswalkError> {
        if let Ok(code) = locales.unmap(value) {
            return Ok(code.neb_code().to_string());
        }
        if let Ok(code) = LangCode::from_neb_code(value) {
            return Ok(locales.map(code).to_string());
        }
        Err(CrosswalkError::BadLangAttribute {
            line: self.line,
            value: value.to_string(),
        })
    }

    fn apply(&self, unit: &Element, out: &mut Element, locales: &LocaleMap) -> Result<(), CrosswalkError> {
        if let Transform::Constant(value) = &self.transform {
            let last = self.target.last();
            let step = LastStep::FindOrCreate;
            if let Some(attr) = last.carry() {
                if let Some((node, _)) = target_node(out, &self.target, &[], step) {
                    node.set_attr(attr, value.as_str());
                }
            } else if let Some((node, created)) = target_node(out, &self.target, &[], step) {
                if created && !value.is_empty() {
                    node.push_text(value.as_str());
                }
            }
            return Ok(());
        }

        let matches = self.select(unit)?;
        if self.transform == Transform::JoinKeywords {
            let mut groups: BTreeMap<(Vec<usize>, Option<String>), Vec<String>> = BTreeMap::new();
            let mut order = Vec::new();
            for m in &matches {
                let key = (m.indices.clone(), m.carried.clone());
                if !groups.contains_key(&key) {
                    order.push(key.clone());
                }
                groups.entry(key).or_default().extend(split_keywords(&m.node.text()));
            }
            for key in order {
                let words = &groups[&key];
                if words.is_empty() {
                    continue;
                }
                let carried = key.1.as_ref().map(|v| self.map_lang(v, locales).unwrap_or_else(|_| v.clone()));
                self.write_leaf(out, &key.0, carried, words.join("; "));
            }
            return Ok(());
        }

        for m in matches {
            match &self.transform {
                Transform::Identity => {
                    self.write_leaf(out, &m.indices, m.carried, m.node.text());
                }
                Transform::LocaleMap => {
                    let carried = match &m.carried {
                        Some(v) => Some(self.map_lang(v, locales)?),
                        None => None,
                    };
                    self.write_leaf(out, &m.indices, carried, m.node.text());
                }
                Transform::Initials => {
                    let author = Author {
                        firstname: m.node.child_text("firstname").unwrap_or_default(),
                        middlename: m.node.child_text("middlename"),
                        ..Default::default()
                    };
                    self.write_leaf(out, &m.indices, m.carried, initials_of(&author));
                }
                Transform::SplitName => {
                    let (first, middle) = split_initials(&m.node.text());
                    if let Some((node, _)) = target_node(out, &self.target, &m.indices, LastStep::FindOrCreate) {
                        node.push(Element::new("firstname").with_text(first));
                        if let Some(middle) = middle {
                            node.push(Element::new("middlename").with_text(middle));
                        }
                    }
                }
                Transform::Constant(_) | Transform::JoinKeywords => unreachable!(),
            }
        }
        Ok(())
    }

    fn write_leaf(&self, out: &mut Element, indices: &[usize], carried: Option<String>, text: String) {
        if let Some((node, _)) = target_node(out, &self.target, indices, LastStep::Append) {
            if let (Some(attr), Some(value)) = (self.target.last().carry(), carried) {
                node.set_attr(attr, value);
            }
            if !text.is_empty() {
                node.push_text(text);
            }
        }
    }
}

fn new_element(seg: &PathSegment, position: usize) -> Element {
    let mut el = Element::new(seg.name.as_str());
    for a in &seg.attrs {
        match a {
            AttrPred::Literal(k, v) => el.set_attr(k.as_str(), v.as_str()),
            AttrPred::Position(k) => el.set_attr(k.as_str(), format!("{:03}", position + 1)),
            AttrPred::Carry(_) => {}
        }
    }
    el
}

/// Walks (creating as needed) to the element addressed by `path`. Returns the
/// element and whether it was created by this call.
fn target_node<'t>(
    root: &'t mut Element,
    path: &ElementPath,
    indices: &[usize],
    last_step: LastStep,
) -> Option<(&'t mut Element, bool)> {
    let mut cur = root;
    let mut indices = indices.iter();
    let mut created = false;
    let n = path.segments.len();
    for (k, seg) in path.segments.iter().enumerate().skip(1) {
        let positions: Vec<usize> = cur
            .children
            .iter()
            .enumerate()
            .filter(|(_, node)| matches!(node, Node::Element(e) if seg.matches(e)))
            .map(|(i, _)| i)
            .collect();
        let is_last = k == n - 1;
        let pos = if seg.repeat {
            let want = indices.next().copied().unwrap_or(0);
            let mut positions = positions;
            created = false;
            while positions.len() <= want {
                cur.children.push(Node::Element(new_element(seg, positions.len())));
                positions.push(cur.children.len() - 1);
                created = true;
            }
            positions[want]
        } else if let Some(nth) = seg.nth {
            created = false;
            *positions.get(nth - 1)?
        } else if is_last && last_step == LastStep::Append {
            cur.children.push(Node::Element(new_element(seg, positions.len())));
            created = true;
            cur.children.len() - 1
        } else if let Some(&p) = positions.first() {
            created = false;
            p
        } else {
            cur.children.push(Node::Element(new_element(seg, 0)));
            created = true;
            cur.children.len() - 1
        };
        cur = match &mut cur.children[pos] {
            Node::Element(e) => e,
            _ => unreachable!(),
        };
    }
    Some((cur, created))
}

/// Affiliations to inject into OJS authors that lack one, keyed by e-mail
/// address or surname.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AffiliationMap(pub BTreeMap<String, String>);

impl AffiliationMap {
    /// Reads `key = affiliation` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<AffiliationMap, CrosswalkError> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(CrosswalkError::RuleConflict {
                line: idx + 1,
                reason: "expected `email-or-surname = affiliation`".into(),
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(AffiliationMap(map))
    }

    fn lookup(&self, author: &Element) -> Option<&String> {
        let email = author.child_text("email").map(|e| e.trim().to_string());
        let last = author.child_text("lastname").map(|e| e.trim().to_string());
        email
            .and_then(|e| self.0.get(&e))
            .or_else(|| last.and_then(|l| self.0.get(&l)))
    }

    fn inject(&self, article: &mut Element) {
        if self.0.is_empty() {
            return;
        }
        for author in article.elements_mut().filter(|e| e.name == "author") {
            if author.child("affiliation").is_some() {
                continue;
            }
            if let Some(aff) = self.lookup(author).cloned() {
                author.push(Element::new("affiliation").with_text(aff));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Crosswalk {
    pub rules: RuleTable,
    pub locales: LocaleMap,
    pub affiliations: AffiliationMap,
}

impl Crosswalk {
    pub fn ojs_to_neb() -> Self {
        Crosswalk {
            rules: RuleTable::ojs_to_neb(),
            locales: LocaleMap::default(),
            affiliations: AffiliationMap::default(),
        }
    }

    pub fn neb_to_ojs() -> Self {
        Crosswalk {
            rules: RuleTable::neb_to_ojs(),
            locales: LocaleMap::default(),
            affiliations: AffiliationMap::default(),
        }
    }
}

/// A field the target document no longer carries.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct LossEntry {
    pub field: String,
    pub lang: Option<LangCode>,
    pub count: usize,
    pub kind: LossKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LossKind {
    Dropped,
    ReducedToInitials,
}

impl fmt::Display for LossEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.field)?;
        if let Some(l) = self.lang {
            write!(f, " ({l})")?;
        }
        match self.kind {
            LossKind::Dropped => write!(f, ": {} dropped", self.count),
            LossKind::ReducedToInitials => write!(f, ": {} reduced to initials", self.count),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrosswalkOutput {
    pub xml: Vec<u8>,
    pub warnings: Vec<String>,
    pub losses: Vec<LossEntry>,
}

fn ojs_units(root: &mut Element) -> Vec<&mut Element> {
    match root.name.as_str() {
        "article" => vec![root],
        "articles" => root.elements_mut().filter(|e| e.name == "article").collect(),
        "issue" => issue_units(root),
        "issues" => root
            .elements_mut()
            .filter(|e| e.name == "issue")
            .flat_map(issue_units)
            .collect(),
        _ => Vec::new(),
    }
}

fn issue_units(issue: &mut Element) -> Vec<&mut Element> {
    let mut out = Vec::new();
    for child in issue.elements_mut() {
        if child.name == "article" {
            out.push(child);
        } else if child.name == "section" {
            out.extend(child.elements_mut().filter(|e| e.name == "article"));
        }
    }
    out
}

pub fn crosswalk_ojs_to_neb(input: &[u8], crosswalk: &Crosswalk) -> Result<CrosswalkOutput, CrosswalkError> {
    let source = parse_ojs(input)?;
    let mut root = xml::parse(input).map_err(OjsError::from)?;
    let mut units = Vec::new();
    for unit in ojs_units(&mut root) {
        crosswalk.affiliations.inject(unit);
        units.push(crosswalk.rules.apply(unit, &crosswalk.locales)?);
    }
    let xml = xml::to_document(&wrap_articles(units));
    let target = parse_articulatus(&xml)?;
    let mut warnings = Vec::new();
    for (r, rec) in target.iter().enumerate() {
        for (i, a) in rec.authors.iter().enumerate() {
            if a.affiliation.is_none() {
                warnings.push(format!(
                    "article {}: author {} ({}) has no affiliation; orgName omitted",
                    r + 1,
                    i + 1,
                    a.lastname
                ));
            }
        }
    }
    if source.issue_metadata.is_some() {
        warnings.push("issue metadata is not carried into Articulatus output".to_string());
    }
    Ok(CrosswalkOutput {
        losses: loss_report(&source.records, &target),
        xml,
        warnings,
    })
}

pub fn crosswalk_neb_to_ojs(input: &[u8], crosswalk: &Crosswalk) -> Result<CrosswalkOutput, CrosswalkError> {
    let source = parse_articulatus(input)?;
    let root = xml::parse(input).map_err(ArticulatusError::from)?;
    let units: Vec<&Element> = match root.name.as_str() {
        "article" => vec![&root],
        _ => root.children_named("article").collect(),
    };
    let mut out = Vec::with_capacity(units.len());
    for unit in units {
        out.push(crosswalk.rules.apply(unit, &crosswalk.locales)?);
    }
    let xml = xml::to_document(&wrap_articles(out));
    let target = parse_ojs(&xml)?.records;
    let mut warnings = Vec::new();
    let losses = loss_report(&source, &target);
    if losses.iter().any(|l| l.kind == LossKind::ReducedToInitials) || source.iter().any(|r| r.authors.iter().any(|a| a.initials_only)) {
        warnings.push("author given names are known only as initials (lossy)".to_string());
    }
    Ok(CrosswalkOutput { xml, warnings, losses })
}

/// Compares records field by field and lists what the target lost.
pub fn loss_report(source: &[ArticleRecord], target: &[ArticleRecord]) -> Vec<LossEntry> {
    let mut counts: BTreeMap<(String, Option<LangCode>, LossKind), usize> = BTreeMap::new();
    let mut add = |field: &str, lang: Option<LangCode>, kind: LossKind, n: usize| {
        if n > 0 {
            *counts.entry((field.to_string(), lang, kind)).or_default() += n;
        }
    };
    let empty = ArticleRecord::default();
    for (i, src) in source.iter().enumerate() {
        let dst = target.get(i).unwrap_or(&empty);
        for lang in LangCode::ALL {
            add("titles", Some(lang), LossKind::Dropped, (src.titles.get(lang).is_some() && dst.titles.get(lang).is_none()) as usize);
            add("abstracts", Some(lang), LossKind::Dropped, (src.abstracts.get(lang).is_some() && dst.abstracts.get(lang).is_none()) as usize);
            let have = src.subjects.get(&lang).map_or(0, Vec::len);
            let kept = dst.subjects.get(&lang).map_or(0, Vec::len);
            add("subjects", Some(lang), LossKind::Dropped, have.saturating_sub(kept));
        }
        add("pages", None, LossKind::Dropped, (src.pages.is_some() && dst.pages.is_none()) as usize);
        add("date_published", None, LossKind::Dropped, (src.date_published.is_some() && dst.date_published.is_none()) as usize);
        add("references", None, LossKind::Dropped, src.references.len().saturating_sub(dst.references.len()));
        add("galleys", None, LossKind::Dropped, src.galleys.len().saturating_sub(dst.galleys.len()));
        add("authors", None, LossKind::Dropped, src.authors.len().saturating_sub(dst.authors.len()));
        for (j, a) in src.authors.iter().enumerate() {
            let Some(b) = dst.authors.get(j) else { continue };
            let reduced = !a.initials_only
                && b.initials_only
                && (a.firstname != b.firstname || a.middlename != b.middlename);
            add("author given names", None, LossKind::ReducedToInitials, reduced as usize);
            add("author email", None, LossKind::Dropped, (a.email.is_some() && b.email.is_none()) as usize);
            add("author country", None, LossKind::Dropped, (a.country.is_some() && b.country.is_none()) as usize);
            add("author biography", None, LossKind::Dropped, (a.biography.is_some() && b.biography.is_none()) as usize);
            add("author affiliation", None, LossKind::Dropped, (a.affiliation.is_some() && b.affiliation.is_none()) as usize);
        }
    }
    counts
        .into_iter()
        .map(|((field, lang, kind), count)| LossEntry { field, lang, count, kind })
        .collect()
}
