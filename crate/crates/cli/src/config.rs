//! Flat `key = value` configuration with `[section]` headers.
//!
//! Keys before any header, or under `[common]`, apply to every command; keys
//! under a command's own section override them. `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt::Display;

use crate::error::CliError;

pub const COMMANDS: [&str; 7] = ["solve", "phase-diagram", "simulate", "overlap", "chaos", "tail", "ppverify"];
const COMMON: &str = "common";

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    section: Option<String>,
    key: String,
    value: String,
    line: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: Vec<Entry>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries: Vec<Entry> = Vec::new();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::config(Some(line), "section", format!("unterminated section header `{content}`")))?
                    .trim();
                if name != COMMON && !COMMANDS.contains(&name) {
                    return Err(CliError::config(Some(line), name, "unknown section"));
                }
                section = (name != COMMON).then(|| name.to_string());
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| CliError::config(Some(line), content, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(CliError::config(Some(line), "", "empty key"));
            }
            if entries.iter().any(|e| e.section == section && e.key == key) {
                return Err(CliError::config(Some(line), key, "duplicate key"));
            }
            entries.push(Entry { section: section.clone(), key: key.to_string(), value: value.to_string(), line });
        }
        Ok(Self { entries })
    }
}

#[derive(Debug, Clone)]
struct Slot {
    value: String,
    line: usize,
    /// Set in the command's own section rather than inherited.
    own: bool,
}

/// Parameters of one command: the merged key/value map, plus a record of every
/// resolved value in lookup order for the output header.
#[derive(Debug)]
pub struct Params {
    command: String,
    slots: BTreeMap<String, Slot>,
    used: Vec<String>,
    echo: Vec<(String, String)>,
}

fn parse_err(slot: &Slot, key: &str, what: impl Display) -> CliError {
    CliError::config(Some(slot.line), key, format!("invalid value `{}`: {what}", slot.value))
}

impl Params {
    pub fn new(file: &ConfigFile, command: &str) -> Self {
        let mut slots = BTreeMap::new();
        for e in file.entries.iter().filter(|e| e.section.is_none()) {
            slots.insert(e.key.clone(), Slot { value: e.value.clone(), line: e.line, own: false });
        }
        for e in file.entries.iter().filter(|e| e.section.as_deref() == Some(command)) {
            slots.insert(e.key.clone(), Slot { value: e.value.clone(), line: e.line, own: true });
        }
        Self { command: command.to_string(), slots, used: Vec::new(), echo: Vec::new() }
    }

    /// Replaces a value, as done by command-line flags.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.slots.insert(key.to_string(), Slot { value: value.into(), line: 0, own: false });
    }

    fn lookup(&mut self, key: &str) -> Option<Slot> {
        self.used.push(key.to_string());
        self.slots.get(key).cloned()
    }

    fn record(&mut self, key: &str, value: String) {
        self.echo.push((key.to_string(), value));
    }

    /// Parses `key` with `parse`, falling back to `default`; `check` validates
    /// the result and returns a message on failure.
    fn get<T: Clone>(
        &mut self,
        key: &str,
        default: T,
        parse: impl Fn(&str) -> Result<T, String>,
        check: impl Fn(&T) -> Result<(), String>,
        show: impl Fn(&T) -> String,
        echo: bool,
    ) -> Result<T, CliError> {
        let value = match self.lookup(key) {
            Some(slot) => {
                let v = parse(&slot.value).map_err(|e| parse_err(&slot, key, e))?;
                check(&v).map_err(|e| parse_err(&slot, key, e))?;
                v
            }
            None => {
                check(&default).map_err(|e| CliError::config(None, key, e))?;
                default
            }
        };
        if echo {
            self.record(key, show(&value));
        }
        Ok(value)
    }

    pub fn f64_in(&mut self, key: &str, default: f64, lo: f64, hi: f64) -> Result<f64, CliError> {
        self.get(key, default, parse_f64, |v| in_range(*v, lo, hi), |v| fmt_f64(*v), true)
    }

    pub fn usize_in(&mut self, key: &str, default: usize, lo: usize, hi: usize) -> Result<usize, CliError> {
        self.get(
            key,
            default,
            |s| s.parse::<usize>().map_err(|e| e.to_string()),
            |v| if (lo..=hi).contains(v) { Ok(()) } else { Err(format!("must lie in [{lo}, {hi}]")) },
            |v| v.to_string(),
            true,
        )
    }

    pub fn u64(&mut self, key: &str, default: u64) -> Result<u64, CliError> {
        self.get(key, default, |s| s.parse::<u64>().map_err(|e| e.to_string()), |_| Ok(()), |v| v.to_string(), true)
    }

    /// A value from a fixed list of choices.
    pub fn choice(&mut self, key: &str, default: &str, choices: &[&str]) -> Result<String, CliError> {
        self.get(
            key,
            default.to_string(),
            |s| Ok(s.to_string()),
            |v| if choices.contains(&v.as_str()) { Ok(()) } else { Err(format!("expected one of {}", choices.join(", "))) },
            |v| v.clone(),
            true,
        )
    }

    /// Like [`Params::choice`] but not echoed in the output header.
    pub fn choice_silent(&mut self, key: &str, default: &str, choices: &[&str]) -> Result<String, CliError> {
        self.get(
            key,
            default.to_string(),
            |s| Ok(s.to_string()),
            |v| if choices.contains(&v.as_str()) { Ok(()) } else { Err(format!("expected one of {}", choices.join(", "))) },
            |v| v.clone(),
            false,
        )
    }

    pub fn optional_string_silent(&mut self, key: &str) -> Option<String> {
        self.lookup(key).map(|s| s.value)
    }

    pub fn usize_silent(&mut self, key: &str, default: usize) -> Result<usize, CliError> {
        self.get(key, default, |s| s.parse::<usize>().map_err(|e| e.to_string()), |_| Ok(()), |v| v.to_string(), false)
    }

    /// A grid of reals: `a:b:step` (inclusive), a comma list, or one value.
    /// An empty value is an empty grid.
    pub fn f64_grid(&mut self, key: &str, default: &str, lo: f64, hi: f64) -> Result<Vec<f64>, CliError> {
        let default = parse_f64_grid(default).expect("valid default grid");
        self.get(
            key,
            default,
            parse_f64_grid,
            |v| v.iter().try_for_each(|&x| in_range(x, lo, hi)),
            |v| v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(","),
            true,
        )
    }

    /// A ladder of sizes: `a:b` (inclusive, step 2), `a:b:step`, a comma
    /// list, or one value.
    pub fn usize_ladder(&mut self, key: &str, default: &str, lo: usize, hi: usize) -> Result<Vec<usize>, CliError> {
        let default = parse_ladder(default).expect("valid default ladder");
        self.get(
            key,
            default,
            parse_ladder,
            |v| {
                if v.is_empty() {
                    return Err("empty ladder".into());
                }
                if v.iter().all(|n| (lo..=hi).contains(n)) {
                    Ok(())
                } else {
                    Err(format!("sizes must lie in [{lo}, {hi}]"))
                }
            },
            |v| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
            true,
        )
    }

    /// Rejects keys in the command's own section that were never looked up.
    pub fn finish(self) -> Result<Vec<(String, String)>, CliError> {
        for (key, slot) in &self.slots {
            if slot.own && !self.used.contains(key) {
                return Err(CliError::config(Some(slot.line), key, format!("unknown key for `{}`", self.command)));
            }
        }
        Ok(self.echo)
    }
}

fn in_range(x: f64, lo: f64, hi: f64) -> Result<(), String> {
    if x.is_finite() && x >= lo && x <= hi {
        Ok(())
    } else {
        Err(format!("must lie in [{lo}, {hi}]"))
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|e| e.to_string())
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn parse_f64_grid(s: &str) -> Result<Vec<f64>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    if s.contains(':') {
        let parts: Vec<f64> = s.split(':').map(parse_f64).collect::<Result<_, _>>()?;
        let [a, b, step] = parts[..] else {
            return Err("expected start:stop:step".into());
        };
        if !(step > 0.0) || b < a {
            return Err("need step > 0 and stop >= start".into());
        }
        let count = ((b - a) / step + 1e-9).floor() as usize + 1;
        if count > 1_000_000 {
            return Err("grid too long".into());
        }
        return Ok((0..count).map(|i| a + i as f64 * step).collect());
    }
    s.split(',').map(parse_f64).collect()
}

fn parse_ladder(s: &str) -> Result<Vec<usize>, String> {
    let s = s.trim();
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| e.to_string());
    if s.contains(':') {
        let parts: Vec<usize> = s.split(':').map(num).collect::<Result<_, _>>()?;
        let (a, b, step) = match parts[..] {
            [a, b] => (a, b, 2),
            [a, b, step] => (a, b, step),
            _ => return Err("expected start:stop or start:stop:step".into()),
        };
        if step == 0 || b < a {
            return Err("need step > 0 and stop >= start".into());
        }
        return Ok((a..=b).step_by(step).collect());
    }
    s.split(',').map(num).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_overrides() {
        let text = "seed = 7\n# comment\n[common]\nformat = csv\n[solve]\nbeta = 1, 2 ,3 # trailing\nseed = 9\n[tail]\nbeta = 2\n";
        let f = ConfigFile::parse(text).unwrap();
        let mut p = Params::new(&f, "solve");
        assert_eq!(p.u64("seed", 0).unwrap(), 9);
        assert_eq!(p.f64_grid("beta", "", 0.0, 6.0).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(p.choice("format", "jsonl", &["csv", "jsonl"]).unwrap(), "csv");
        let echo = p.finish().unwrap();
        assert_eq!(echo[0], ("seed".to_string(), "9".to_string()));
    }

    #[test]
    fn diagnostics_carry_line_and_field() {
        let err = ConfigFile::parse("[solve]\nbeta 2\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = ConfigFile::parse("[nope]\n").unwrap_err();
        assert!(err.to_string().contains("nope"));
        let f = ConfigFile::parse("[solve]\nbeta = 9\n").unwrap();
        let err = Params::new(&f, "solve").f64_grid("beta", "1", 0.0, 6.0).unwrap_err();
        assert!(err.to_string().contains("line 2") && err.to_string().contains("beta"), "{err}");
        let f = ConfigFile::parse("[solve]\nbta = 1\n").unwrap();
        let err = Params::new(&f, "solve").finish().unwrap_err();
        assert!(err.to_string().contains("bta"));
        assert!(ConfigFile::parse("[solve]\nx = 1\nx = 2\n").is_err());
    }

    #[test]
    fn grids_and_ladders() {
        assert_eq!(parse_f64_grid("0.5:1.5:0.25").unwrap(), vec![0.5, 0.75, 1.0, 1.25, 1.5]);
        assert_eq!(parse_f64_grid("").unwrap(), Vec::<f64>::new());
        assert_eq!(parse_f64_grid("0.1:0.3:0.1").unwrap().len(), 3);
        assert!(parse_f64_grid("1:0:1").is_err());
        assert_eq!(parse_ladder("12:18").unwrap(), vec![12, 14, 16, 18]);
        assert_eq!(parse_ladder("12:20:4").unwrap(), vec![12, 16, 20]);
        assert_eq!(parse_ladder("8, 9").unwrap(), vec![8, 9]);
        assert!(parse_ladder("a:b").is_err());
    }

    #[test]
    fn float_echo_round_trips() {
        for x in [0.1, 1.0 / 3.0, 2.5, 1e-6] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }
}
