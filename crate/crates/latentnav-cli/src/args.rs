//! Minimal `--flag value` argument parsing with unknown-flag rejection.

use latentnav::error::{Error, Result};

pub struct Args {
    pairs: Vec<(String, String)>,
    consumed: Vec<bool>,
}

impl Args {
    /// Parses `--name value` pairs; every flag takes exactly one value.
    pub fn parse(raw: &[String]) -> Result<Args> {
        let mut pairs = Vec::new();
        let mut i = 0;
        while i < raw.len() {
            let flag = raw[i]
                .strip_prefix("--")
                .ok_or_else(|| Error::config("arguments", format!("expected a --flag, got {:?}", raw[i])))?;
            let value = raw
                .get(i + 1)
                .ok_or_else(|| Error::config(format!("--{flag}"), "missing value"))?;
            pairs.push((flag.to_string(), value.clone()));
            i += 2;
        }
        let consumed = vec![false; pairs.len()];
        Ok(Args { pairs, consumed })
    }

    /// All values given for `name`, in order (for repeatable flags).
    pub fn all(&mut self, name: &str) -> Vec<String> {
        let mut values = Vec::new();
        for (i, (flag, value)) in self.pairs.iter().enumerate() {
            if flag == name {
                self.consumed[i] = true;
                values.push(value.clone());
            }
        }
        values
    }

    pub fn opt(&mut self, name: &str) -> Result<Option<String>> {
        let values = self.all(name);
        if values.len() > 1 {
            return Err(Error::config(format!("--{name}"), "given more than once"));
        }
        Ok(values.into_iter().next())
    }

    pub fn required(&mut self, name: &str) -> Result<String> {
        self.opt(name)?
            .ok_or_else(|| Error::config(format!("--{name}"), "required flag is missing"))
    }

    pub fn opt_parsed<T: std::str::FromStr>(&mut self, name: &str) -> Result<Option<T>> {
        match self.opt(name)? {
            None => Ok(None),
            Some(text) => text.parse::<T>().map(Some).map_err(|_| {
                Error::config(format!("--{name}"), format!("unparseable value {text:?}"))
            }),
        }
    }

    pub fn required_parsed<T: std::str::FromStr>(&mut self, name: &str) -> Result<T> {
        let text = self.required(name)?;
        text.parse::<T>()
            .map_err(|_| Error::config(format!("--{name}"), format!("unparseable value {text:?}")))
    }

    /// Errors if any flag was never consumed by the command.
    pub fn finish(self) -> Result<()> {
        for ((flag, _), used) in self.pairs.iter().zip(&self.consumed) {
            if !used {
                return Err(Error::config(format!("--{flag}"), "unknown flag for this command"));
            }
        }
        Ok(())
    }
}
