//! `key=value` comma lists such as `K=0.5,tau1=0.8,tau2=0.1,theta=0.05`.

use metatune::eval::Axis;
use metatune::{Error, Result, TaskParams};

fn pairs(text: &str) -> Result<Vec<(String, f64)>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("expected key=value, got '{item}'")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("'{}' is not a number in '{item}'", v.trim())))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn task_key(key: &str) -> Option<usize> {
    match key {
        "K" | "k" => Some(0),
        "tau1" => Some(1),
        "tau2" => Some(2),
        "theta" => Some(3),
        _ => None,
    }
}

/// A complete task; all four keys are required.
pub fn parse_task(text: &str) -> Result<TaskParams> {
    let mut v = [None; 4];
    for (k, x) in pairs(text)? {
        let i = task_key(&k)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown task key '{k}' (expected K, tau1, tau2, theta)")))?;
        v[i] = Some(x);
    }
    let get = |i: usize, name: &str| v[i].ok_or_else(|| Error::InvalidArgument(format!("task spec is missing '{name}'")));
    TaskParams::new(get(0, "K")?, get(1, "tau1")?, get(2, "tau2")?, get(3, "theta")?)
}

/// `K=..,tau1=..` pins for the PCA protocol.
pub fn parse_fix(text: &str) -> Result<(f64, f64)> {
    let mut k = None;
    let mut tau1 = None;
    for (key, x) in pairs(text)? {
        match key.as_str() {
            "K" | "k" => k = Some(x),
            "tau1" => tau1 = Some(x),
            other => return Err(Error::InvalidArgument(format!("--fix accepts K and tau1, got '{other}'"))),
        }
    }
    match (k, tau1) {
        (Some(k), Some(t)) => Ok((k, t)),
        _ => Err(Error::InvalidArgument("--fix needs both K and tau1".into())),
    }
}

/// Fixed grid coordinates keyed by axis name.
pub fn parse_fixed(text: &str, base: [f64; 4]) -> Result<[f64; 4]> {
    let mut v = base;
    for (k, x) in pairs(text)? {
        v[k.parse::<Axis>()?.index()] = x;
    }
    Ok(v)
}

pub fn parse_axes(text: &str) -> Result<(Axis, Axis)> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::InvalidArgument(format!("--vary needs two comma-separated axes, got '{text}'")));
    }
    Ok((parts[0].parse()?, parts[1].parse()?))
}
