//! URL decomposition and percent-decoding.
//!
//! Parsing is deliberately narrower than WHATWG URL parsing: it keeps the
//! query as an ordered multimap and decodes each component exactly once, so
//! a value extracted here can be compared byte-for-byte with a cookie value.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UrlParts {
    pub scheme: String,
    pub host: String,
    pub port: Option<u16>,
    pub path_segments: Vec<String>,
    pub query_pairs: Vec<(String, String)>,
    pub fragment: Option<String>,
    pub raw: String,
}

/// Replace every valid `%HH` triplet with its octet.
///
/// Invalid triplets are kept verbatim. When the decoded octets are not valid
/// UTF-8 the input is returned unchanged.
pub fn percent_decode(s: &str) -> String {
    if !s.contains('%') {
        return s.to_owned();
    }
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            if let (Some(hi), Some(lo)) = (hex_val(bytes[i + 1]), hex_val(bytes[i + 2])) {
                out.push(hi << 4 | lo);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8(out).unwrap_or_else(|_| s.to_owned())
}

fn hex_val(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'a'..=b'f' => Some(b - b'a' + 10),
        b'A'..=b'F' => Some(b - b'A' + 10),
        _ => None,
    }
}

fn percent_encode_into(out: &mut String, s: &str, reserved: &[char]) {
    for c in s.chars() {
        if c == '%' || reserved.contains(&c) || c.is_ascii_control() || c == ' ' {
            let mut buf = [0u8; 4];
            for b in c.encode_utf8(&mut buf).bytes() {
                let _ = write!(out, "%{b:02X}");
            }
        } else {
            out.push(c);
        }
    }
}

fn valid_scheme(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
}

/// Split a query string on `&`, then on the first `=`, decoding afterwards.
pub fn parse_query(query: &str) -> Vec<(String, String)> {
    query
        .split('&')
        .filter(|p| !p.is_empty())
        .map(|pair| match pair.split_once('=') {
            Some((k, v)) => (percent_decode(k), percent_decode(v)),
            None => (percent_decode(pair), String::new()),
        })
        .collect()
}

pub fn parse_url(raw: &str) -> Result<UrlParts> {
    let malformed = || Error::MalformedUrl(raw.to_owned());
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(malformed());
    }
    let (scheme, rest) = trimmed.split_once(':').ok_or_else(malformed)?;
    if !valid_scheme(scheme) {
        return Err(malformed());
    }
    let scheme = scheme.to_ascii_lowercase();

    let (rest, fragment) = match rest.split_once('#') {
        Some((r, f)) => (r, Some(f.to_owned())),
        None => (rest, None),
    };
    let (rest, query) = match rest.split_once('?') {
        Some((r, q)) => (r, Some(q)),
        None => (rest, None),
    };

    let (host, port, path) = if let Some(after) = rest.strip_prefix("//") {
        let (authority, path) = match after.find('/') {
            Some(i) => (&after[..i], &after[i..]),
            None => (after, ""),
        };
        let hostport = authority.rsplit_once('@').map_or(authority, |(_, h)| h);
        let (host, port) = split_host_port(hostport).ok_or_else(malformed)?;
        (host.to_ascii_lowercase(), port, path)
    } else {
        (String::new(), None, rest)
    };

    if host.is_empty() && matches!(scheme.as_str(), "http" | "https") {
        return Err(malformed());
    }

    let path_segments = if path.is_empty() {
        Vec::new()
    } else {
        path.strip_prefix('/')
            .unwrap_or(path)
            .split('/')
            .map(percent_decode)
            .collect()
    };

    Ok(UrlParts {
        scheme,
        host,
        port,
        path_segments,
        query_pairs: query.map(parse_query).unwrap_or_default(),
        fragment,
        raw: raw.to_owned(),
    })
}

fn split_host_port(hostport: &str) -> Option<(String, Option<u16>)> {
    if let Some(inner) = hostport.strip_prefix('[') {
        let (addr, tail) = inner.split_once(']')?;
        let port = match tail {
            "" => None,
            t => Some(t.strip_prefix(':')?.parse().ok()?),
        };
        return Some((format!("[{addr}]"), port));
    }
    match hostport.rsplit_once(':') {
        Some((h, "")) => Some((h.to_owned(), None)),
        Some((h, p)) => Some((h.to_owned(), Some(p.parse().ok()?))),
        None => Some((hostport.to_owned(), None)),
    }
}

impl UrlParts {
    /// Re-encode the decoded components into a URL string.
    pub fn serialize(&self) -> String {
        let mut out = String::with_capacity(self.raw.len());
        out.push_str(&self.scheme);
        out.push(':');
        if !self.host.is_empty() {
            out.push_str("//");
            out.push_str(&self.host);
            if let Some(p) = self.port {
                let _ = write!(out, ":{p}");
            }
        }
        for (i, seg) in self.path_segments.iter().enumerate() {
            if i > 0 || !self.host.is_empty() {
                out.push('/');
            }
            percent_encode_into(&mut out, seg, &['/', '?', '#']);
        }
        if !self.query_pairs.is_empty() {
            out.push('?');
            for (i, (k, v)) in self.query_pairs.iter().enumerate() {
                if i > 0 {
                    out.push('&');
                }
                percent_encode_into(&mut out, k, &['&', '=', '#']);
                out.push('=');
                percent_encode_into(&mut out, v, &['&', '#']);
            }
        }
        if let Some(f) = &self.fragment {
            out.push('#');
            out.push_str(f);
        }
        out
    }

    pub fn is_ip_literal(&self) -> bool {
        is_ip_literal(&self.host)
    }

    /// Resolve a possibly-relative reference (as found in `Location`).
    pub fn join(&self, reference: &str) -> Result<UrlParts> {
        let reference = reference.trim();
        if let Ok(abs) = parse_url(reference) {
            if !abs.host.is_empty() || !matches!(abs.scheme.as_str(), "http" | "https") {
                return Ok(abs);
            }
        }
        let origin = match self.port {
            Some(p) => format!("{}://{}:{p}", self.scheme, self.host),
            None => format!("{}://{}", self.scheme, self.host),
        };
        let joined = if reference.starts_with("//") {
            format!("{}:{reference}", self.scheme)
        } else if reference.starts_with('/') {
            format!("{origin}{reference}")
        } else if reference.starts_with('?') {
            let mut path = String::new();
            for seg in &self.path_segments {
                path.push('/');
                percent_encode_into(&mut path, seg, &['/', '?', '#']);
            }
            format!("{origin}{path}{reference}")
        } else {
            let mut dir = String::new();
            if let Some((_, parents)) = self.path_segments.split_last() {
                for seg in parents {
                    dir.push('/');
                    percent_encode_into(&mut dir, seg, &['/', '?', '#']);
                }
            }
            format!("{origin}{dir}/{reference}")
        };
        parse_url(&joined)
    }
}

pub fn is_ip_literal(host: &str) -> bool {
    host.starts_with('[') || host.parse::<std::net::Ipv4Addr>().is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_components() {
        let u = parse_url("https://t.com/a/b?uid=ABC&x=1").unwrap();
        assert_eq!(u.scheme, "https");
        assert_eq!(u.host, "t.com");
        assert_eq!(u.path_segments, ["a", "b"]);
        assert_eq!(
            u.query_pairs,
            [("uid".to_owned(), "ABC".to_owned()), ("x".to_owned(), "1".to_owned())]
        );
    }

    #[test]
    fn decodes_path_once() {
        assert_eq!(parse_url("https://t.com/p%41th").unwrap().path_segments, ["pAth"]);
        assert_eq!(parse_url("https://t.com/%2541").unwrap().path_segments, ["%41"]);
    }

    #[test]
    fn decodes_query_after_splitting() {
        let u = parse_url("https://t.com/?k=v%26w").unwrap();
        assert_eq!(u.query_pairs, [("k".to_owned(), "v&w".to_owned())]);
        assert_eq!(u.path_segments, [""]);
    }

    #[test]
    fn percent_decode_cases() {
        assert_eq!(percent_decode("A%42C"), "ABC");
        assert_eq!(percent_decode("100%25"), "100%");
        assert_eq!(percent_decode("%ZZ"), "%ZZ");
        assert_eq!(percent_decode("%4"), "%4");
        assert_eq!(percent_decode("%"), "%");
        assert_eq!(percent_decode("%C3%A9"), "é");
        // lone continuation byte is not UTF-8
        assert_eq!(percent_decode("a%80b"), "a%80b");
    }

    #[test]
    fn host_port_userinfo() {
        let u = parse_url("HTTP://user:pw@Sub.Tracker1.COM:8080/x").unwrap();
        assert_eq!(u.scheme, "http");
        assert_eq!(u.host, "sub.tracker1.com");
        assert_eq!(u.port, Some(8080));
        let v6 = parse_url("http://[::1]:81/").unwrap();
        assert_eq!(v6.host, "[::1]");
        assert!(v6.is_ip_literal());
        assert!(parse_url("http://10.0.0.1/").unwrap().is_ip_literal());
    }

    #[test]
    fn rejects_unrecoverable() {
        assert!(parse_url("").is_err());
        assert!(parse_url("/relative/path").is_err());
        assert!(parse_url("https:///nohost").is_err());
        assert!(parse_url("http://h:notaport/").is_err());
        assert!(parse_url("about:blank").is_ok());
    }

    #[test]
    fn join_relative_locations() {
        let base = parse_url("https://t1.com/a/b?x=1").unwrap();
        assert_eq!(base.join("/sync?id=ABC").unwrap().serialize(), "https://t1.com/sync?id=ABC");
        assert_eq!(base.join("c").unwrap().serialize(), "https://t1.com/a/c");
        assert_eq!(base.join("//t2.com/z").unwrap().host, "t2.com");
        assert_eq!(base.join("https://t2.com/q?id=1").unwrap().host, "t2.com");
    }

    #[test]
    fn serialize_reparses() {
        let u = parse_url("https://t.com/a%2Fb/c?k%3D=v%26w&e#frag").unwrap();
        let again = parse_url(&u.serialize()).unwrap();
        assert_eq!(again.path_segments, u.path_segments);
        assert_eq!(again.query_pairs, u.query_pairs);
        assert_eq!(again.fragment, u.fragment);
    }
}
