use std::fmt;

use super::DfsError;

/// An absolute, normalized filesystem path: `/` or `/a/b` with no empty,
/// `.` or `..` segments.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DfsPath(String);

impl DfsPath {
    pub fn root() -> Self {
        DfsPath("/".to_string())
    }

    pub fn parse(text: &str) -> Result<Self, DfsError> {
        let invalid = || DfsError::InvalidPath(text.to_string());
        if !text.starts_with('/') {
            return Err(invalid());
        }
        let trimmed = text.trim_end_matches('/');
        if trimmed.is_empty() {
            return Ok(Self::root());
        }
        for seg in trimmed[1..].split('/') {
            if seg.is_empty() || seg == "." || seg == ".." {
                return Err(invalid());
            }
        }
        Ok(DfsPath(trimmed.to_string()))
    }

    /// Resolves `input` against `cwd` when it is relative.
    pub fn resolve(input: &str, cwd: &DfsPath) -> Result<Self, DfsError> {
        if input.starts_with('/') {
            Self::parse(input)
        } else if input.is_empty() || input == "." {
            Ok(cwd.clone())
        } else {
            Self::parse(&format!("{}/{}", cwd.as_str().trim_end_matches('/'), input))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_root(&self) -> bool {
        self.0 == "/"
    }

    pub fn parent(&self) -> Option<DfsPath> {
        if self.is_root() {
            return None;
        }
        let idx = self.0.rfind('/').unwrap();
        Some(if idx == 0 { Self::root() } else { DfsPath(self.0[..idx].to_string()) })
    }

    /// Last segment; empty for the root.
    pub fn name(&self) -> &str {
        &self.0[self.0.rfind('/').unwrap() + 1..]
    }

    pub fn join(&self, name: &str) -> Result<DfsPath, DfsError> {
        if self.is_root() {
            Self::parse(&format!("/{name}"))
        } else {
            Self::parse(&format!("{}/{}", self.0, name))
        }
    }

    /// Proper ancestors from the root down, excluding `/` itself.
    pub fn ancestors(&self) -> Vec<DfsPath> {
        let mut out = Vec::new();
        let mut cur = self.parent();
        while let Some(p) = cur {
            if p.is_root() {
                break;
            }
            cur = p.parent();
            out.push(p);
        }
        out.reverse();
        out
    }
}

impl fmt::Display for DfsPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_normalize() {
        assert_eq!(DfsPath::parse("/").unwrap(), DfsPath::root());
        assert_eq!(DfsPath::parse("/a/b/").unwrap().as_str(), "/a/b");
        for bad in ["", "a/b", "/a//b", "/a/./b", "/a/../b", "/.."] {
            assert!(DfsPath::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn relatives_and_parents() {
        let home = DfsPath::parse("/user/hadoop").unwrap();
        let p = DfsPath::resolve("datain/", &home).unwrap();
        assert_eq!(p.as_str(), "/user/hadoop/datain");
        assert_eq!(p.name(), "datain");
        assert_eq!(p.parent().unwrap(), home);
        assert_eq!(DfsPath::parse("/a").unwrap().parent(), Some(DfsPath::root()));
        assert_eq!(DfsPath::root().parent(), None);
        let anc: Vec<_> = p.ancestors().into_iter().map(|a| a.to_string()).collect();
        assert_eq!(anc, vec!["/user", "/user/hadoop"]);
        assert_eq!(DfsPath::root().join("x").unwrap().as_str(), "/x");
    }
}
