use std::collections::{BTreeMap, BTreeSet};

use url::Url;

use crate::instance::{CategoryPath, DocumentRecord, TermBag};

/// Sparse TF-IDF vector keyed by term.
pub type TermVector = BTreeMap<String, f64>;

/// Weights each bag by raw count times `ln((n+1)/(df+1)) + 1`, with
/// document frequencies taken over `bags` itself. Missing bags become
/// empty vectors.
pub fn tfidf_vectors(bags: &[Option<&TermBag>]) -> Vec<TermVector> {
    let n = bags.len() as f64;
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for bag in bags.iter().flatten() {
        for (term, &count) in bag.iter() {
            if count > 0 {
                *df.entry(term.as_str()).or_default() += 1;
            }
        }
    }
    bags.iter()
        .map(|bag| {
            let Some(bag) = bag else {
                return TermVector::new();
            };
            bag.iter()
                .filter(|(_, &c)| c > 0)
                .map(|(term, &c)| {
                    let idf = ((n + 1.0) / (df[term.as_str()] as f64 + 1.0)).ln() + 1.0;
                    (term.clone(), c as f64 * idf)
                })
                .collect()
        })
        .collect()
}

/// `1 - cos(a, b)`, or 1 when either vector is zero. Clamped to `[0, 1]`.
pub fn cosine_dissim(a: &TermVector, b: &TermVector) -> f64 {
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let d: f64 = small
        .iter()
        .filter_map(|(t, x)| large.get(t).map(|y| x * y))
        .sum();
    (1.0 - d / (na * nb)).clamp(0.0, 1.0)
}

/// Dense-vector form of [`cosine_dissim`].
pub fn cosine_dissim_dense(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (1.0 - d / (na * nb)).clamp(0.0, 1.0)
}

/// Returned when either document has no categories.
pub const ODP_NEUTRAL: f64 = 0.5;

fn category_dis(u: &CategoryPath, v: &CategoryPath) -> f64 {
    let longest = u.0.len().max(v.0.len());
    if longest == 0 {
        return 0.0;
    }
    let common = u.0.iter().zip(&v.0).take_while(|(a, b)| a == b).count();
    (longest - common) as f64 / longest as f64
}

/// Mean prefix distance over all category pairs.
pub fn odp_distance(a: &[CategoryPath], b: &[CategoryPath]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return ODP_NEUTRAL;
    }
    let total: f64 = a.iter().flat_map(|u| b.iter().map(move |v| category_dis(u, v))).sum();
    total / (a.len() * b.len()) as f64
}

fn linked(from: &DocumentRecord, to: &DocumentRecord) -> bool {
    let id = &from.doc_id;
    let has = |s: &Option<BTreeSet<String>>| s.as_ref().is_some_and(|s| s.contains(id));
    has(&to.meta.inlinks) || has(&to.meta.outlinks)
}

/// 0 when either document appears among the other's in- or outlinks.
pub fn link_dissim(a: &DocumentRecord, b: &DocumentRecord) -> f64 {
    if a.doc_id == b.doc_id || linked(a, b) || linked(b, a) {
        0.0
    } else {
        1.0
    }
}

fn parse_url(s: &str) -> Option<Url> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    let parsed = if s.contains("://") {
        Url::parse(s)
    } else {
        Url::parse(&format!("http://{s}"))
    };
    parsed.ok().filter(|u| u.host_str().is_some())
}

fn path_segments(u: &Url) -> Vec<String> {
    u.path_segments()
        .map(|s| s.filter(|x| !x.is_empty()).map(str::to_owned).collect())
        .unwrap_or_default()
}

/// Registered domain guess: the last two host labels, or three when the
/// second-level label looks like `co.uk`-style public suffix.
pub fn registered_domain(host: &str) -> String {
    let labels: Vec<&str> = host.trim_end_matches('.').split('.').collect();
    if labels.len() <= 2 || host.parse::<std::net::IpAddr>().is_ok() {
        return host.to_owned();
    }
    let tld = labels[labels.len() - 1];
    let sld = labels[labels.len() - 2];
    let keep = if tld.len() == 2 && matches!(sld, "co" | "com" | "ac" | "gov" | "org" | "net" | "edu" | "ne" | "or")
    {
        3
    } else {
        2
    };
    labels[labels.len() - keep.min(labels.len())..].join(".")
}

/// 0 when one URL is a path prefix of the other on the same host, 0.5 for
/// the same host or registered domain, 1 otherwise or when unparseable.
pub fn url_dissim(a: &str, b: &str) -> f64 {
    let (Some(ua), Some(ub)) = (parse_url(a), parse_url(b)) else {
        return 1.0;
    };
    let (ha, hb) = (
        ua.host_str().unwrap_or_default().to_ascii_lowercase(),
        ub.host_str().unwrap_or_default().to_ascii_lowercase(),
    );
    if ha == hb {
        let (pa, pb) = (path_segments(&ua), path_segments(&ub));
        let common = pa.iter().zip(&pb).take_while(|(x, y)| x == y).count();
        if common == pa.len().min(pb.len()) {
            return 0.0;
        }
        return 0.5;
    }
    if registered_domain(&ha) == registered_domain(&hb) {
        0.5
    } else {
        1.0
    }
}
