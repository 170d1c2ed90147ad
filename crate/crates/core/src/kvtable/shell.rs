//! Interpreter for the table shell: `create`, `put`, `scan`, `get`, `flush`,
//! `list`, `exit`. Arguments are single- or double-quoted strings, bare
//! integers, or `{KEY=>'value', ...}` maps.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use super::{Cell, FamilySpec, KvError, RegionServer};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arg {
    Str(String),
    Int(i64),
    Map(Vec<(String, String)>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Command {
    pub name: String,
    pub args: Vec<Arg>,
}

pub fn parse_command(line: &str) -> Result<Option<Command>, String> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let split = line.find(|c: char| c.is_whitespace()).unwrap_or(line.len());
    let (name, rest) = line.split_at(split);
    if !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(format!("syntax error near '{name}'"));
    }
    let mut p = Parser { s: rest.as_bytes(), pos: 0 };
    let mut args = Vec::new();
    p.ws();
    if !p.done() {
        loop {
            args.push(p.arg()?);
            p.ws();
            if p.done() {
                break;
            }
            p.expect(b',')?;
        }
    }
    Ok(Some(Command { name: name.to_string(), args }))
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn done(&self) -> bool {
        self.pos >= self.s.len()
    }

    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn ws(&mut self) {
        while self.peek().is_some_and(|c| c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), String> {
        self.ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(format!("expected '{}' at column {}", c as char, self.pos + 1))
        }
    }

    fn string(&mut self) -> Result<String, String> {
        self.ws();
        let quote = self.peek().filter(|c| *c == b'\'' || *c == b'"').ok_or("expected a quoted string")?;
        self.pos += 1;
        let mut out = Vec::new();
        loop {
            match self.peek() {
                None => return Err("unterminated string".into()),
                Some(b'\\') if self.s.get(self.pos + 1).is_some() => {
                    out.push(self.s[self.pos + 1]);
                    self.pos += 2;
                }
                Some(c) if c == quote => {
                    self.pos += 1;
                    break;
                }
                Some(c) => {
                    out.push(c);
                    self.pos += 1;
                }
            }
        }
        String::from_utf8(out).map_err(|_| "string is not UTF-8".into())
    }

    fn ident(&mut self) -> Result<String, String> {
        self.ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format!("expected a name at column {}", self.pos + 1));
        }
        Ok(String::from_utf8_lossy(&self.s[start..self.pos]).into_owned())
    }

    fn arg(&mut self) -> Result<Arg, String> {
        self.ws();
        match self.peek() {
            Some(b'\'' | b'"') => self.string().map(Arg::Str),
            Some(b'{') => {
                self.pos += 1;
                let mut entries = Vec::new();
                self.ws();
                if self.peek() == Some(b'}') {
                    self.pos += 1;
                    return Ok(Arg::Map(entries));
                }
                loop {
                    let key = match self.peek() {
                        Some(b'\'' | b'"') => self.string()?,
                        _ => self.ident()?,
                    };
                    self.expect(b'=')?;
                    self.expect(b'>')?;
                    self.ws();
                    let value = match self.peek() {
                        Some(b'\'' | b'"') => self.string()?,
                        _ => self.ident()?,
                    };
                    entries.push((key.to_ascii_uppercase(), value));
                    self.ws();
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b'}') => {
                            self.pos += 1;
                            return Ok(Arg::Map(entries));
                        }
                        _ => return Err("expected ',' or '}' in map".into()),
                    }
                }
            }
            Some(c) if c.is_ascii_digit() || c == b'-' => {
                let start = self.pos;
                self.pos += 1;
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
                std::str::from_utf8(&self.s[start..self.pos])
                    .unwrap()
                    .parse()
                    .map(Arg::Int)
                    .map_err(|_| "bad integer".into())
            }
            _ => Err(format!("unexpected input at column {}", self.pos + 1)),
        }
    }
}

/// Printable form of a byte string; other bytes become `\xNN`.
pub fn printable(bytes: &[u8]) -> String {
    let mut s = String::new();
    for &b in bytes {
        if (0x20..0x7f).contains(&b) {
            s.push(b as char);
        } else {
            let _ = write!(s, "\\x{b:02X}");
        }
    }
    s
}

pub const ROW_WIDTH: usize = 35;

/// The `ROW COLUMN+CELL` block for `cells`, without the summary line.
pub fn render_cells(cells: &[Cell]) -> String {
    let mut out = format!("{:<ROW_WIDTH$} {}\n", "ROW", "COLUMN+CELL");
    for c in cells {
        let _ = writeln!(
            out,
            "{:<ROW_WIDTH$} column={}, timestamp={}, value={}",
            printable(&c.row),
            c.column(),
            c.timestamp,
            printable(&c.value)
        );
    }
    out
}

pub fn row_count(cells: &[Cell]) -> usize {
    cells.iter().map(|c| &c.row).collect::<BTreeSet<_>>().len()
}

pub fn summary(rows: usize, secs: f64) -> String {
    format!("{rows} row(s) in {secs:.4} seconds")
}

pub struct Outcome {
    pub output: String,
    pub exit: bool,
}

const USAGE: &str = "\
Commands:
  create 'table', 'family'[, ...]           or  create 'table', {NAME=>'family', COMPRESSION=>'lzo'}
  put 'table', 'row', 'family:qualifier', 'value'[, timestamp]
  scan 'table'[, {STARTROW=>'a', STOPROW=>'z'}]
  get 'table', 'row'
  flush 'table'
  list
  exit";

pub struct Session {
    server: Arc<RegionServer>,
    line_no: usize,
}

impl Session {
    pub fn new(server: Arc<RegionServer>) -> Self {
        Self { server, line_no: 1 }
    }

    pub fn prompt(&self) -> String {
        format!("hbase(main):{:03}:0> ", self.line_no)
    }

    /// Executes one input line. Errors are reported in the output; the
    /// session stays usable.
    pub fn execute(&mut self, line: &str) -> Outcome {
        let cmd = match parse_command(line) {
            Ok(None) => return Outcome { output: String::new(), exit: false },
            Ok(Some(c)) => c,
            Err(e) => {
                self.line_no += 1;
                return Outcome { output: format!("ERROR: {e}\n\n{USAGE}\n"), exit: false };
            }
        };
        self.line_no += 1;
        let started = Instant::now();
        let result = self.dispatch(&cmd);
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(Reply::Exit) => Outcome { output: String::new(), exit: true },
            Ok(Reply::Rows { body, rows }) => Outcome { output: format!("{body}{}\n", summary(rows, secs)), exit: false },
            Ok(Reply::Text(t)) => Outcome { output: t, exit: false },
            Err(ShellError::Usage(m)) => Outcome { output: format!("ERROR: {m}\n\n{USAGE}\n"), exit: false },
            Err(ShellError::Kv(e)) => Outcome { output: format!("ERROR: {e}\n"), exit: false },
        }
    }

    fn dispatch(&self, cmd: &Command) -> Result<Reply, ShellError> {
        let s = &self.server;
        let strs = |n: usize| -> Result<Vec<&str>, ShellError> {
            if cmd.args.len() < n {
                return Err(ShellError::Usage(format!("{} needs {n} argument(s)", cmd.name)));
            }
            cmd.args[..n]
                .iter()
                .map(|a| match a {
                    Arg::Str(s) => Ok(s.as_str()),
                    _ => Err(ShellError::Usage(format!("{}: expected a quoted string", cmd.name))),
                })
                .collect()
        };
        match cmd.name.as_str() {
            "exit" | "quit" => Ok(Reply::Exit),
            "help" => Ok(Reply::Text(format!("{USAGE}\n"))),
            "create" => {
                let table = strs(1)?[0];
                let mut families = Vec::new();
                for a in &cmd.args[1..] {
                    families.push(match a {
                        Arg::Str(f) => FamilySpec::new(f),
                        Arg::Map(m) => {
                            let get = |k: &str| m.iter().find(|(key, _)| key == k).map(|(_, v)| v.clone());
                            let name = get("NAME").ok_or_else(|| ShellError::Usage("family map needs NAME".into()))?;
                            let codec = get("COMPRESSION").map(|c| c.to_ascii_lowercase());
                            FamilySpec { name, compression: codec.unwrap_or_else(|| super::DEFAULT_COMPRESSION.into()) }
                        }
                        Arg::Int(_) => return Err(ShellError::Usage("create: unexpected number".into())),
                    });
                }
                s.create_table(table, &families)?;
                Ok(Reply::Rows { body: String::new(), rows: 0 })
            }
            "put" => {
                let a = strs(4)?;
                let ts = match cmd.args.get(4) {
                    None => None,
                    Some(Arg::Int(t)) => Some(*t),
                    Some(_) => return Err(ShellError::Usage("put: timestamp must be a number".into())),
                };
                s.put(a[0], a[1].as_bytes(), a[2], a[3].as_bytes(), ts)?;
                Ok(Reply::Rows { body: String::new(), rows: 0 })
            }
            "scan" => {
                let table = strs(1)?[0];
                let (mut start, mut stop) = (None, None);
                if let Some(Arg::Map(m)) = cmd.args.get(1) {
                    for (k, v) in m {
                        match k.as_str() {
                            "STARTROW" => start = Some(v.clone()),
                            "STOPROW" => stop = Some(v.clone()),
                            other => return Err(ShellError::Usage(format!("scan: unsupported option {other}"))),
                        }
                    }
                }
                let cells = s.scan(table, start.as_deref().map(str::as_bytes), stop.as_deref().map(str::as_bytes))?;
                Ok(Reply::Rows { body: render_cells(&cells), rows: row_count(&cells) })
            }
            "get" => {
                let a = strs(2)?;
                let cells = s.get(a[0], a[1].as_bytes())?;
                let mut body = format!("{:<ROW_WIDTH$} {}\n", "COLUMN", "CELL");
                for c in &cells {
                    let _ = writeln!(body, "{:<ROW_WIDTH$} timestamp={}, value={}", c.column(), c.timestamp, printable(&c.value));
                }
                Ok(Reply::Rows { body, rows: row_count(&cells) })
            }
            "flush" => {
                let table = strs(1)?[0];
                s.flush(table)?;
                Ok(Reply::Rows { body: String::new(), rows: 0 })
            }
            "list" => {
                let names = s.table_names();
                let mut body = String::from("TABLE\n");
                for n in &names {
                    let _ = writeln!(body, "{n}");
                }
                Ok(Reply::Rows { body, rows: names.len() })
            }
            other => Err(ShellError::Usage(format!("unknown command '{other}'"))),
        }
    }
}

enum Reply {
    Exit,
    Rows { body: String, rows: usize },
    Text(String),
}

enum ShellError {
    Usage(String),
    Kv(KvError),
}

impl From<KvError> for ShellError {
    fn from(e: KvError) -> Self {
        ShellError::Kv(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_documented_forms() {
        let c = parse_command("create 'Faculty', {NAME=>'name', COMPRESSION=>'lzo'}").unwrap().unwrap();
        assert_eq!(c.name, "create");
        assert_eq!(
            c.args,
            vec![
                Arg::Str("Faculty".into()),
                Arg::Map(vec![("NAME".into(), "name".into()), ("COMPRESSION".into(), "lzo".into())])
            ]
        );
        let c = parse_command("put 'student', 'row1', 'name:a', 'Nandan'").unwrap().unwrap();
        assert_eq!(c.args.len(), 4);
        let c = parse_command("put 't','r','f:q','it\\'s', 42").unwrap().unwrap();
        assert_eq!(c.args[3], Arg::Str("it's".into()));
        assert_eq!(c.args[4], Arg::Int(42));
        assert_eq!(parse_command("exit").unwrap().unwrap().args, vec![]);
        assert!(parse_command("   ").unwrap().is_none());
        assert!(parse_command("scan 'x").is_err());
        assert!(parse_command("scan 'x' 'y'").is_err());
    }

    #[test]
    fn printable_escapes() {
        assert_eq!(printable(b"ab\x00\xff"), "ab\\x00\\xFF");
    }
}
