//! TOML network documents.
//!
//! ```toml
//! [[appliances]]
//! id = "g1"
//! kind = "generator"
//! m = 0.5
//! d = 0.008
//! b = 1.0          # optional, generators only, defaults to 1
//! shunt = 0.1      # optional, defaults to 0
//!
//! [[edges]]
//! i = "g1"
//! j = "l1"
//! Y = 1.2
//!
//! [partition]      # optional, load id -> generator id
//! l1 = "g1"
//! ```
//!
//! Ids may be strings or integers.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use super::{Appliance, Edge, Kind, Network};
use crate::error::{Error, Result};

#[derive(Deserialize)]
#[serde(untagged)]
enum Id {
    Text(String),
    Number(i64),
}

impl Id {
    fn into_string(self) -> String {
        match self {
            Id::Text(s) => s,
            Id::Number(k) => k.to_string(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAppliance {
    id: Spanned<Id>,
    kind: Spanned<Kind>,
    m: Spanned<f64>,
    d: Spanned<f64>,
    b: Option<Spanned<f64>>,
    shunt: Option<Spanned<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    i: Spanned<Id>,
    j: Spanned<Id>,
    #[serde(rename = "Y")]
    y: Spanned<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    appliances: Vec<RawAppliance>,
    #[serde(default)]
    edges: Vec<RawEdge>,
    partition: Option<BTreeMap<String, Spanned<Id>>>,
}

struct Located<'a> {
    text: &'a str,
    name: &'a str,
}

impl Located<'_> {
    fn error(&self, span: Option<Range<usize>>, message: impl Into<String>) -> Error {
        Error::schema(self.text, self.name, span, message)
    }
}

/// Parses a network document; `source_name` prefixes error locations.
pub fn parse_network(text: &str, source_name: &str) -> Result<Network> {
    let loc = Located { text, name: source_name };
    let raw: RawNetwork = toml::from_str(text).map_err(|e| loc.error(e.span(), e.message().trim_end()))?;

    let mut appliances = Vec::with_capacity(raw.appliances.len());
    let mut by_id = HashMap::new();
    for a in raw.appliances {
        let id_span = a.id.span();
        let id = a.id.into_inner().into_string();
        if by_id.insert(id.clone(), appliances.len()).is_some() {
            return Err(loc.error(Some(id_span), format!("duplicate appliance id '{id}'")));
        }
        let kind = *a.kind.get_ref();
        for (name, v) in [("m", &a.m), ("d", &a.d)] {
            if !(v.get_ref().is_finite() && *v.get_ref() > 0.0) {
                return Err(loc.error(Some(v.span()), format!("'{name}' of appliance '{id}' must be positive, got {}", v.get_ref())));
            }
        }
        let b = match (&a.b, kind) {
            (Some(b), Kind::Load) => return Err(loc.error(Some(b.span()), format!("load '{id}' has no input channel; remove 'b'"))),
            (Some(b), Kind::Generator) if !b.get_ref().is_finite() => {
                return Err(loc.error(Some(b.span()), format!("'b' of generator '{id}' must be finite")))
            }
            (Some(b), Kind::Generator) => *b.get_ref(),
            (None, Kind::Generator) => 1.0,
            (None, Kind::Load) => 0.0,
        };
        let shunt = match &a.shunt {
            Some(s) if !(s.get_ref().is_finite() && *s.get_ref() >= 0.0) => {
                return Err(loc.error(Some(s.span()), format!("'shunt' of appliance '{id}' must be nonnegative")))
            }
            Some(s) => *s.get_ref(),
            None => 0.0,
        };
        appliances.push(Appliance {
            id,
            kind,
            m: *a.m.get_ref(),
            d: *a.d.get_ref(),
            b,
            shunt,
        });
    }
    if !appliances.iter().any(|a| a.kind == Kind::Generator) {
        return Err(loc.error(None, "network has no generator"));
    }

    let lookup = |id: Spanned<Id>| -> Result<usize> {
        let span = id.span();
        let id = id.into_inner().into_string();
        by_id.get(&id).copied().ok_or_else(|| loc.error(Some(span), format!("unknown appliance id '{id}'")))
    };
    let mut edges = Vec::with_capacity(raw.edges.len());
    let mut seen = HashMap::new();
    for e in raw.edges {
        let span = e.i.span();
        let (i, j) = (lookup(e.i)?, lookup(e.j)?);
        if i == j {
            return Err(loc.error(Some(span), format!("self-loop at '{}'", appliances[i].id)));
        }
        if seen.insert((i.min(j), i.max(j)), ()).is_some() {
            return Err(loc.error(Some(span), format!("duplicate edge '{}'-'{}'", appliances[i].id, appliances[j].id)));
        }
        let y = *e.y.get_ref();
        if !(y.is_finite() && y > 0.0) {
            return Err(loc.error(Some(e.y.span()), format!("admittance 'Y' must be positive, got {y}")));
        }
        edges.push(Edge { i, j, y });
    }

    let partition = match raw.partition {
        None => None,
        Some(map) => {
            let mut list = Vec::with_capacity(map.len());
            for (load, gen) in map {
                let span = gen.span();
                let l = *by_id
                    .get(&load)
                    .ok_or_else(|| loc.error(Some(span.clone()), format!("partition names unknown load '{load}'")))?;
                if appliances[l].kind != Kind::Load {
                    return Err(loc.error(Some(span), format!("partition key '{load}' is not a load")));
                }
                let g = lookup(gen)?;
                if appliances[g].kind != Kind::Generator {
                    return Err(loc.error(Some(span), format!("'{load}' is assigned to '{}', which is not a generator", appliances[g].id)));
                }
                list.push((l, g));
            }
            if let Some(missing) = appliances.iter().find(|a| a.kind == Kind::Load && !list.iter().any(|&(l, _)| appliances[l].id == a.id)) {
                return Err(loc.error(None, format!("partition does not assign load '{}'", missing.id)));
            }
            Some(list)
        }
    };
    Network::new(appliances, edges, partition)
}

/// Reads and parses a network file.
pub fn read_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_network(&text, &path.display().to_string())
}

#[derive(Serialize)]
struct OutAppliance<'a> {
    id: &'a str,
    kind: Kind,
    m: f64,
    d: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
    shunt: f64,
}

#[derive(Serialize)]
struct OutEdge<'a> {
    i: &'a str,
    j: &'a str,
    #[serde(rename = "Y")]
    y: f64,
}

#[derive(Serialize)]
struct OutNetwork<'a> {
    appliances: Vec<OutAppliance<'a>>,
    edges: Vec<OutEdge<'a>>,
    partition: BTreeMap<&'a str, &'a str>,
}

/// Renders a network as a document accepted by [`parse_network`], with an
/// explicit partition.
pub fn write_network(net: &Network) -> Result<String> {
    let apps = net.appliances();
    let n_gen = net.generators();
    let doc = OutNetwork {
        appliances: apps
            .iter()
            .map(|a| OutAppliance {
                id: &a.id,
                kind: a.kind,
                m: a.m,
                d: a.d,
                b: (a.kind == Kind::Generator).then_some(a.b),
                shunt: a.shunt,
            })
            .collect(),
        edges: net
            .edges()
            .iter()
            .map(|e| OutEdge {
                i: &apps[e.i].id,
                j: &apps[e.j].id,
                y: e.y,
            })
            .collect(),
        partition: net
            .partition()
            .iter()
            .enumerate()
            .map(|(l, &g)| (apps[n_gen + l].id.as_str(), apps[g].id.as_str()))
            .collect(),
    };
    toml::to_string(&doc).map_err(|e| Error::Numerical(format!("cannot serialize network: {e}")))
}
