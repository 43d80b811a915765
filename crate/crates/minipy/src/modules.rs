//! The small standard library available to snippets.

use std::collections::HashMap;
use std::rc::Rc;

use crate::builtins;
use crate::interp::{as_float, as_int, exc, type_error, Interp, R};
use crate::methods;
use crate::value::*;

const MATH_FNS: &[&str] = &[
    "math.acos",
    "math.asin",
    "math.atan",
    "math.atan2",
    "math.ceil",
    "math.comb",
    "math.cos",
    "math.degrees",
    "math.exp",
    "math.fabs",
    "math.factorial",
    "math.floor",
    "math.fsum",
    "math.gcd",
    "math.hypot",
    "math.isclose",
    "math.isfinite",
    "math.isinf",
    "math.isnan",
    "math.lcm",
    "math.log",
    "math.log10",
    "math.log2",
    "math.perm",
    "math.pow",
    "math.prod",
    "math.radians",
    "math.sin",
    "math.sqrt",
    "math.tan",
    "math.trunc",
];
const RE_FNS: &[&str] = &[
    "re.compile",
    "re.escape",
    "re.findall",
    "re.finditer",
    "re.fullmatch",
    "re.match",
    "re.search",
    "re.split",
    "re.sub",
];
const JSON_FNS: &[&str] = &["json.dump", "json.dumps", "json.load", "json.loads"];
const OS_FNS: &[&str] = &["os.getcwd", "os.listdir", "os.makedirs", "os.remove"];
const PATH_FNS: &[&str] = &[
    "os.path.abspath",
    "os.path.basename",
    "os.path.dirname",
    "os.path.exists",
    "os.path.getsize",
    "os.path.isdir",
    "os.path.isfile",
    "os.path.join",
    "os.path.splitext",
];
const STAT_FNS: &[&str] = &[
    "statistics.mean",
    "statistics.median",
    "statistics.mode",
    "statistics.pstdev",
    "statistics.pvariance",
    "statistics.stdev",
    "statistics.variance",
];
const COLLECTIONS_FNS: &[&str] = &["collections.Counter"];
const FUNCTOOLS_FNS: &[&str] = &["functools.reduce"];

pub const MODULE_NAMES: &[&str] = &[
    "collections",
    "functools",
    "json",
    "math",
    "os",
    "os.path",
    "re",
    "statistics",
    "string",
    "sys",
];

fn module(name: &str, fns: &[&'static str], extra: Vec<(&str, Value)>) -> Value {
    let mut attrs = HashMap::new();
    for f in fns {
        let short = f.rsplit('.').next().unwrap_or(f);
        attrs.insert(short.to_string(), Value::Builtin(f));
    }
    for (k, v) in extra {
        attrs.insert(k.to_string(), v);
    }
    Value::Module(Rc::new(ModuleObj {
        name: name.to_string(),
        attrs,
    }))
}

pub fn import(name: &str) -> R<Value> {
    Ok(match name {
        "math" => module(
            name,
            MATH_FNS,
            vec![
                ("pi", Value::Float(std::f64::consts::PI)),
                ("e", Value::Float(std::f64::consts::E)),
                ("tau", Value::Float(std::f64::consts::TAU)),
                ("inf", Value::Float(f64::INFINITY)),
                ("nan", Value::Float(f64::NAN)),
            ],
        ),
        "re" => {
            let flag = |v: i64| Value::Int(v);
            module(
                name,
                RE_FNS,
                vec![
                    ("IGNORECASE", flag(2)),
                    ("I", flag(2)),
                    ("MULTILINE", flag(8)),
                    ("M", flag(8)),
                    ("DOTALL", flag(16)),
                    ("S", flag(16)),
                    ("VERBOSE", flag(64)),
                    ("X", flag(64)),
                    ("error", Value::Type(Rc::from("error"))),
                ],
            )
        }
        "json" => module(
            name,
            JSON_FNS,
            vec![("JSONDecodeError", Value::Type(Rc::from("JSONDecodeError")))],
        ),
        "os" => module(
            name,
            OS_FNS,
            vec![("path", import("os.path")?), ("sep", Value::str("/"))],
        ),
        "os.path" => module(name, PATH_FNS, vec![("sep", Value::str("/"))]),
        "statistics" => module(name, STAT_FNS, vec![]),
        "collections" => module(name, COLLECTIONS_FNS, vec![]),
        "functools" => module(name, FUNCTOOLS_FNS, vec![]),
        "string" => module(
            name,
            &[],
            vec![
                (
                    "ascii_letters",
                    Value::str("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"),
                ),
                ("ascii_lowercase", Value::str("abcdefghijklmnopqrstuvwxyz")),
                ("ascii_uppercase", Value::str("ABCDEFGHIJKLMNOPQRSTUVWXYZ")),
                ("digits", Value::str("0123456789")),
                ("hexdigits", Value::str("0123456789abcdefABCDEF")),
                (
                    "punctuation",
                    Value::str("!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~"),
                ),
                ("whitespace", Value::str(" \t\n\r\x0b\x0c")),
            ],
        ),
        "sys" => {
            let stream = |n: &str| {
                Value::Module(Rc::new(ModuleObj {
                    name: n.to_string(),
                    attrs: HashMap::new(),
                }))
            };
            module(
                name,
                &[],
                vec![
                    ("stdout", stream("sys.stdout")),
                    ("stderr", stream("sys.stderr")),
                    ("maxsize", Value::Int(i64::MAX)),
                ],
            )
        }
        _ => {
            return Err(exc(
                "ModuleNotFoundError",
                format!("No module named '{name}'"),
            ))
        }
    })
}

fn want(name: &str, args: &[Value], min: usize, max: usize) -> R<()> {
    if args.len() < min || args.len() > max {
        let short = name.rsplit('.').next().unwrap_or(name);
        return Err(type_error(format!(
            "{short}() takes {} arguments ({} given)",
            if min == max {
                format!("exactly {min}")
            } else {
                format!("{min} to {max}")
            },
            args.len()
        )));
    }
    Ok(())
}

fn num(v: &Value) -> R<f64> {
    as_float(v).ok_or_else(|| type_error(format!("must be real number, not {}", v.type_name())))
}

fn domain() -> crate::interp::Unwind {
    exc("ValueError", "math domain error")
}

fn take(kwargs: &mut Vec<(String, Value)>, name: &str) -> Option<Value> {
    let pos = kwargs.iter().position(|(k, _)| k == name)?;
    Some(kwargs.remove(pos).1)
}

pub fn call(
    interp: &mut Interp,
    name: &'static str,
    args: Vec<Value>,
    mut kwargs: Vec<(String, Value)>,
) -> R<Value> {
    let (module, _) = name.rsplit_once('.').unwrap_or(("", name));
    match module {
        "math" => math(interp, name, args, kwargs),
        "re" => regex_call(interp, name, args, kwargs),
        "json" => json_call(interp, name, args, kwargs),
        "os" | "os.path" => os_call(interp, name, args, kwargs),
        "statistics" => stats(interp, name, args),
        "collections" => {
            want(name, &args, 0, 1)?;
            let mut d = Dict::new();
            if let Some(src) = args.first() {
                for v in interp.collect(src)? {
                    let k = interp.key(&v)?;
                    let entry = d.entry(k).or_insert((v, Value::Int(0)));
                    entry.1 = Value::Int(as_int(&entry.1).unwrap_or(0) + 1);
                }
            }
            let _ = take(&mut kwargs, "");
            Ok(Value::dict(d))
        }
        "functools" => {
            want(name, &args, 2, 3)?;
            let f = args[0].clone();
            let mut items = interp.collect(&args[1])?.into_iter();
            let mut acc = match args.get(2) {
                Some(init) => init.clone(),
                None => items.next().ok_or_else(|| {
                    type_error("reduce() of empty iterable with no initial value")
                })?,
            };
            for v in items {
                acc = interp.call(&f, vec![acc, v], Vec::new())?;
            }
            Ok(acc)
        }
        _ => Err(exc("AttributeError", format!("unknown function {name}"))),
    }
}

fn math(
    interp: &mut Interp,
    name: &str,
    args: Vec<Value>,
    mut kwargs: Vec<(String, Value)>,
) -> R<Value> {
    let f1 = |f: fn(f64) -> f64| -> R<Value> {
        want(name, &args, 1, 1)?;
        Ok(Value::Float(f(num(&args[0])?)))
    };
    match name {
        "math.sqrt" => {
            want(name, &args, 1, 1)?;
            let x = num(&args[0])?;
            if x < 0.0 {
                return Err(domain());
            }
            Ok(Value::Float(x.sqrt()))
        }
        "math.floor" | "math.ceil" | "math.trunc" => {
            want(name, &args, 1, 1)?;
            if let Some(i) = as_int(&args[0]) {
                return Ok(Value::Int(i));
            }
            let x = num(&args[0])?;
            if !x.is_finite() {
                return Err(exc(
                    "OverflowError",
                    "cannot convert float infinity to integer",
                ));
            }
            let r = match name {
                "math.floor" => x.floor(),
                "math.ceil" => x.ceil(),
                _ => x.trunc(),
            };
            Ok(Value::Int(r as i64))
        }
        "math.log" => {
            want(name, &args, 1, 2)?;
            let x = num(&args[0])?;
            if x <= 0.0 {
                return Err(domain());
            }
            match args.get(1) {
                Some(b) => {
                    let b = num(b)?;
                    if b <= 0.0 || b == 1.0 {
                        return Err(if b == 1.0 {
                            exc("ZeroDivisionError", "float division by zero")
                        } else {
                            domain()
                        });
                    }
                    Ok(Value::Float(x.ln() / b.ln()))
                }
                None => Ok(Value::Float(x.ln())),
            }
        }
        "math.log10" | "math.log2" => {
            want(name, &args, 1, 1)?;
            let x = num(&args[0])?;
            if x <= 0.0 {
                return Err(domain());
            }
            Ok(Value::Float(if name == "math.log10" {
                x.log10()
            } else {
                x.log2()
            }))
        }
        "math.exp" => {
            want(name, &args, 1, 1)?;
            let r = num(&args[0])?.exp();
            if r.is_infinite() {
                return Err(exc("OverflowError", "math range error"));
            }
            Ok(Value::Float(r))
        }
        "math.pow" => {
            want(name, &args, 2, 2)?;
            Ok(Value::Float(num(&args[0])?.powf(num(&args[1])?)))
        }
        "math.fabs" => f1(f64::abs),
        "math.sin" => f1(f64::sin),
        "math.cos" => f1(f64::cos),
        "math.tan" => f1(f64::tan),
        "math.atan" => f1(f64::atan),
        "math.degrees" => f1(f64::to_degrees),
        "math.radians" => f1(f64::to_radians),
        "math.asin" | "math.acos" => {
            want(name, &args, 1, 1)?;
            let x = num(&args[0])?;
            if !(-1.0..=1.0).contains(&x) {
                return Err(domain());
            }
            Ok(Value::Float(if name == "math.asin" {
                x.asin()
            } else {
                x.acos()
            }))
        }
        "math.atan2" => {
            want(name, &args, 2, 2)?;
            Ok(Value::Float(num(&args[0])?.atan2(num(&args[1])?)))
        }
        "math.hypot" => {
            let mut acc = 0.0f64;
            for a in &args {
                acc = acc.hypot(num(a)?);
            }
            Ok(Value::Float(acc))
        }
        "math.isnan" => {
            want(name, &args, 1, 1)?;
            Ok(Value::Bool(num(&args[0])?.is_nan()))
        }
        "math.isinf" => {
            want(name, &args, 1, 1)?;
            Ok(Value::Bool(num(&args[0])?.is_infinite()))
        }
        "math.isfinite" => {
            want(name, &args, 1, 1)?;
            Ok(Value::Bool(num(&args[0])?.is_finite()))
        }
        "math.isclose" => {
            want(name, &args, 2, 2)?;
            let rel = take(&mut kwargs, "rel_tol")
                .map(|v| num(&v))
                .transpose()?
                .unwrap_or(1e-9);
            let abs = take(&mut kwargs, "abs_tol")
                .map(|v| num(&v))
                .transpose()?
                .unwrap_or(0.0);
            let (a, b) = (num(&args[0])?, num(&args[1])?);
            let close = a == b || (a - b).abs() <= (rel * a.abs().max(b.abs())).max(abs);
            Ok(Value::Bool(close))
        }
        "math.factorial" => {
            want(name, &args, 1, 1)?;
            let n = as_int(&args[0])
                .ok_or_else(|| type_error("'float' object cannot be interpreted as an integer"))?;
            if n < 0 {
                return Err(exc(
                    "ValueError",
                    "factorial() not defined for negative values",
                ));
            }
            let mut acc: i64 = 1;
            for i in 2..=n {
                acc = acc.checked_mul(i).ok_or_else(|| {
                    exc(
                        "OverflowError",
                        "integer overflow (this kernel uses 64-bit integers)",
                    )
                })?;
            }
            Ok(Value::Int(acc))
        }
        "math.gcd" | "math.lcm" => {
            let mut acc: i64 = if name == "math.gcd" { 0 } else { 1 };
            for a in &args {
                let v = as_int(a)
                    .ok_or_else(|| {
                        type_error("'float' object cannot be interpreted as an integer")
                    })?
                    .abs();
                let g = gcd(acc, v);
                acc = if name == "math.gcd" {
                    g
                } else if v == 0 || acc == 0 {
                    0
                } else {
                    (acc / g)
                        .checked_mul(v)
                        .ok_or_else(|| exc("OverflowError", "integer overflow"))?
                };
            }
            Ok(Value::Int(acc))
        }
        "math.comb" | "math.perm" => {
            want(name, &args, 1, 2)?;
            let n = as_int(&args[0]).ok_or_else(|| type_error("expected int"))?;
            let k = match args.get(1) {
                Some(k) => as_int(k).ok_or_else(|| type_error("expected int"))?,
                None => n,
            };
            if n < 0 || k < 0 {
                return Err(exc("ValueError", "n must be a non-negative integer"));
            }
            if k > n {
                return Ok(Value::Int(0));
            }
            let mut acc: i128 = 1;
            if name == "math.perm" {
                for i in 0..k {
                    acc *= (n - i) as i128;
                    if acc > i64::MAX as i128 {
                        return Err(exc("OverflowError", "integer overflow"));
                    }
                }
            } else {
                let k = k.min(n - k);
                for i in 0..k {
                    acc = acc * (n - i) as i128 / (i + 1) as i128;
                    if acc > i64::MAX as i128 {
                        return Err(exc("OverflowError", "integer overflow"));
                    }
                }
            }
            Ok(Value::Int(acc as i64))
        }
        "math.prod" => {
            want(name, &args, 1, 1)?;
            let start = take(&mut kwargs, "start").unwrap_or(Value::Int(1));
            let mut acc = start;
            for v in interp.collect(&args[0])? {
                acc = interp.binary_op(crate::ast::BinOp::Mul, acc, v)?;
            }
            Ok(acc)
        }
        "math.fsum" => {
            want(name, &args, 1, 1)?;
            let mut vals = Vec::new();
            for v in interp.collect(&args[0])? {
                vals.push(num(&v)?);
            }
            Ok(Value::Float(fsum(&vals)))
        }
        _ => Err(exc("AttributeError", format!("unknown function {name}"))),
    }
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.abs()
}

/// Exactly rounded float sum (Shewchuk).
pub fn fsum(values: &[f64]) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for &x0 in values {
        let mut x = x0;
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    partials.iter().sum()
}

// ---- statistics ----------------------------------------------------------

fn stats(interp: &mut Interp, name: &str, args: Vec<Value>) -> R<Value> {
    want(name, &args, 1, 1)?;
    let items = interp.collect(&args[0])?;
    let short = name.rsplit('.').next().unwrap_or(name);
    if short == "mode" {
        if items.is_empty() {
            return Err(exc("StatisticsError", "no mode for empty data"));
        }
        let mut counts: indexmap::IndexMap<Key, (Value, usize)> = indexmap::IndexMap::new();
        for v in items {
            let k = interp.key(&v)?;
            counts.entry(k).or_insert((v, 0)).1 += 1;
        }
        let best = counts.values().map(|(_, c)| *c).max().unwrap_or(0);
        return Ok(counts
            .into_values()
            .find(|(_, c)| *c == best)
            .map(|(v, _)| v)
            .unwrap_or(Value::None));
    }
    let mut xs = Vec::with_capacity(items.len());
    for v in &items {
        xs.push(num(v)?);
    }
    let all_int = items
        .iter()
        .all(|v| matches!(v, Value::Int(_) | Value::Bool(_)));
    let need = if matches!(short, "stdev" | "variance") {
        2
    } else {
        1
    };
    if xs.len() < need {
        return Err(exc(
            "StatisticsError",
            match short {
                "mean" => "mean requires at least one data point".to_string(),
                "median" => "no median for empty data".to_string(),
                "stdev" | "variance" => "variance requires at least two data points".to_string(),
                _ => format!("{short} requires at least one data point"),
            },
        ));
    }
    let n = xs.len() as f64;
    let mean = fsum(&xs) / n;
    match short {
        "mean" => {
            if all_int && mean.fract() == 0.0 && mean.abs() < 9e15 {
                Ok(Value::Int(mean as i64))
            } else {
                Ok(Value::Float(mean))
            }
        }
        "median" => {
            let mut sorted = items.clone();
            let keys = sorted.clone();
            sorted = builtins::sort_values(sorted, keys, false)?;
            let m = sorted.len();
            if m % 2 == 1 {
                Ok(sorted[m / 2].clone())
            } else {
                let a = num(&sorted[m / 2 - 1])?;
                let b = num(&sorted[m / 2])?;
                Ok(Value::Float((a + b) / 2.0))
            }
        }
        _ => {
            let ss = fsum(
                &xs.iter()
                    .map(|x| (x - mean) * (x - mean))
                    .collect::<Vec<_>>(),
            );
            let var = if matches!(short, "stdev" | "variance") {
                ss / (n - 1.0)
            } else {
                ss / n
            };
            Ok(Value::Float(if short.ends_with("stdev") {
                var.sqrt()
            } else {
                var
            }))
        }
    }
}

// ---- os ------------------------------------------------------------------

fn os_call(
    interp: &mut Interp,
    name: &str,
    args: Vec<Value>,
    mut kwargs: Vec<(String, Value)>,
) -> R<Value> {
    let path_arg = |i: usize| -> R<String> {
        match args.get(i) {
            Some(Value::Str(s)) => Ok(s.to_string()),
            Some(other) => Err(type_error(format!(
                "expected str, bytes or os.PathLike object, not {}",
                other.type_name()
            ))),
            None => Err(type_error("missing required argument 'path'")),
        }
    };
    match name {
        "os.getcwd" => Ok(Value::str(interp.resolve(".").to_string_lossy())),
        "os.listdir" => {
            let p = if args.is_empty() {
                ".".to_string()
            } else {
                path_arg(0)?
            };
            let rd = std::fs::read_dir(interp.resolve(&p)).map_err(|_| {
                exc(
                    "FileNotFoundError",
                    format!("[Errno 2] No such file or directory: {}", str_repr(&p)),
                )
            })?;
            let mut names: Vec<String> = rd
                .filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .collect();
            names.sort();
            Ok(Value::list(names.into_iter().map(Value::str).collect()))
        }
        "os.makedirs" => {
            let p = path_arg(0)?;
            let exist_ok = take(&mut kwargs, "exist_ok")
                .map(|v| v.truthy())
                .unwrap_or(false)
                || args.get(2).map(|v| v.truthy()).unwrap_or(false);
            let real = interp.resolve(&p);
            if real.exists() && !exist_ok {
                return Err(exc(
                    "FileExistsError",
                    format!("[Errno 17] File exists: {}", str_repr(&p)),
                ));
            }
            std::fs::create_dir_all(&real).map_err(|e| exc("OSError", e.to_string()))?;
            Ok(Value::None)
        }
        "os.remove" => {
            let p = path_arg(0)?;
            std::fs::remove_file(interp.resolve(&p)).map_err(|_| {
                exc(
                    "FileNotFoundError",
                    format!("[Errno 2] No such file or directory: {}", str_repr(&p)),
                )
            })?;
            Ok(Value::None)
        }
        "os.path.exists" => Ok(Value::Bool(interp.resolve(&path_arg(0)?).exists())),
        "os.path.isfile" => Ok(Value::Bool(interp.resolve(&path_arg(0)?).is_file())),
        "os.path.isdir" => Ok(Value::Bool(interp.resolve(&path_arg(0)?).is_dir())),
        "os.path.getsize" => {
            let p = path_arg(0)?;
            let md = std::fs::metadata(interp.resolve(&p)).map_err(|_| {
                exc(
                    "FileNotFoundError",
                    format!("[Errno 2] No such file or directory: {}", str_repr(&p)),
                )
            })?;
            Ok(Value::Int(md.len() as i64))
        }
        "os.path.abspath" => Ok(Value::str(interp.resolve(&path_arg(0)?).to_string_lossy())),
        "os.path.join" => {
            let mut out = String::new();
            for i in 0..args.len() {
                let part = path_arg(i)?;
                if part.starts_with('/') || out.is_empty() {
                    out = part;
                } else {
                    if !out.ends_with('/') {
                        out.push('/');
                    }
                    out.push_str(&part);
                }
            }
            Ok(Value::str(out))
        }
        "os.path.basename" => {
            let p = path_arg(0)?;
            Ok(Value::str(p.rsplit('/').next().unwrap_or("")))
        }
        "os.path.dirname" => {
            let p = path_arg(0)?;
            Ok(Value::str(match p.rfind('/') {
                Some(0) => "/",
                Some(i) => &p[..i],
                None => "",
            }))
        }
        "os.path.splitext" => {
            let p = path_arg(0)?;
            let base_start = p.rfind('/').map(|i| i + 1).unwrap_or(0);
            let base = &p[base_start..];
            let dot = base
                .rfind('.')
                .filter(|&i| i > 0 && !base[..i].chars().all(|c| c == '.'));
            Ok(Value::tuple(match dot {
                Some(i) => vec![Value::str(&p[..base_start + i]), Value::str(&base[i..])],
                None => vec![Value::str(&p), Value::str("")],
            }))
        }
        _ => Err(exc("AttributeError", format!("unknown function {name}"))),
    }
}

// ---- json ----------------------------------------------------------------

fn from_json(v: serde_json::Value) -> Value {
    match v {
        serde_json::Value::Null => Value::None,
        serde_json::Value::Bool(b) => Value::Bool(b),
        serde_json::Value::Number(n) => match n.as_i64() {
            Some(i) => Value::Int(i),
            None => Value::Float(n.as_f64().unwrap_or(f64::NAN)),
        },
        serde_json::Value::String(s) => Value::str(s),
        serde_json::Value::Array(items) => Value::list(items.into_iter().map(from_json).collect()),
        serde_json::Value::Object(map) => {
            let mut d = Dict::new();
            for (k, v) in map {
                d.insert(
                    Key::Str(Rc::from(k.as_str())),
                    (Value::str(&k), from_json(v)),
                );
            }
            Value::dict(d)
        }
    }
}

fn json_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            '\u{08}' => out.push_str("\\b"),
            '\u{0c}' => out.push_str("\\f"),
            c if (c as u32) < 0x20 || !c.is_ascii() => {
                let mut buf = [0u16; 2];
                for unit in c.encode_utf16(&mut buf) {
                    out.push_str(&format!("\\u{unit:04x}"));
                }
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn json_key(k: &Value) -> R<String> {
    Ok(match k {
        Value::Str(s) => s.to_string(),
        Value::Int(i) => i.to_string(),
        Value::Bool(b) => {
            if *b {
                "true".into()
            } else {
                "false".into()
            }
        }
        Value::Float(f) => float_repr(*f),
        Value::None => "null".into(),
        other => {
            return Err(type_error(format!(
                "keys must be str, int, float, bool or None, not {}",
                other.type_name()
            )))
        }
    })
}

fn to_json(
    v: &Value,
    indent: Option<&str>,
    sort_keys: bool,
    level: usize,
    out: &mut String,
) -> R<()> {
    let (nl, pad, pad_in, item_sep) = match indent {
        Some(ind) => ("\n", ind.repeat(level), ind.repeat(level + 1), ","),
        None => ("", String::new(), String::new(), ", "),
    };
    match v {
        Value::None => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Int(i) => out.push_str(&i.to_string()),
        Value::Float(f) => out.push_str(&if f.is_nan() {
            "NaN".to_string()
        } else if f.is_infinite() {
            if *f > 0.0 {
                "Infinity".into()
            } else {
                "-Infinity".into()
            }
        } else {
            float_repr(*f)
        }),
        Value::Str(s) => out.push_str(&json_str(s)),
        Value::List(_) | Value::Tuple(_) => {
            let items: Vec<Value> = match v {
                Value::List(l) => l.borrow().clone(),
                Value::Tuple(t) => t.as_ref().clone(),
                _ => unreachable!(),
            };
            if items.is_empty() {
                out.push_str("[]");
                return Ok(());
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(item_sep);
                }
                out.push_str(nl);
                out.push_str(&pad_in);
                to_json(item, indent, sort_keys, level + 1, out)?;
            }
            out.push_str(nl);
            out.push_str(&pad);
            out.push(']');
        }
        Value::Dict(d) => {
            let mut entries: Vec<(String, Value)> = Vec::new();
            for (k, val) in d.borrow().values() {
                entries.push((json_key(k)?, val.clone()));
            }
            if sort_keys {
                entries.sort_by(|a, b| a.0.cmp(&b.0));
            }
            if entries.is_empty() {
                out.push_str("{}");
                return Ok(());
            }
            out.push('{');
            for (i, (k, val)) in entries.iter().enumerate() {
                if i > 0 {
                    out.push_str(item_sep);
                }
                out.push_str(nl);
                out.push_str(&pad_in);
                out.push_str(&json_str(k));
                out.push_str(": ");
                to_json(val, indent, sort_keys, level + 1, out)?;
            }
            out.push_str(nl);
            out.push_str(&pad);
            out.push('}');
        }
        other => {
            return Err(type_error(format!(
                "Object of type {} is not JSON serializable",
                other.type_name()
            )))
        }
    }
    Ok(())
}

fn json_call(
    interp: &mut Interp,
    name: &str,
    args: Vec<Value>,
    mut kwargs: Vec<(String, Value)>,
) -> R<Value> {
    let indent = take(&mut kwargs, "indent").and_then(|v| match v {
        Value::Int(n) => Some(" ".repeat(n.max(0) as usize)),
        Value::Str(s) => Some(s.to_string()),
        _ => None,
    });
    let sort_keys = take(&mut kwargs, "sort_keys")
        .map(|v| v.truthy())
        .unwrap_or(false);
    take(&mut kwargs, "ensure_ascii");
    take(&mut kwargs, "default");
    match name {
        "json.loads" | "json.load" => {
            want(name, &args, 1, 1)?;
            let text = match (&args[0], name) {
                (Value::Str(s), "json.loads") => s.to_string(),
                (Value::File(f), "json.load") => {
                    let lines = methods::file_lines(f)?;
                    lines.iter().map(|l| l.to_str()).collect()
                }
                (other, _) => {
                    return Err(type_error(format!(
                        "the JSON object must be str, bytes or bytearray, not {}",
                        other.type_name()
                    )))
                }
            };
            let parsed: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
                exc(
                    "JSONDecodeError",
                    format!(
                        "{}: line {} column {}",
                        json_reason(&e),
                        e.line(),
                        e.column()
                    ),
                )
            })?;
            Ok(from_json(parsed))
        }
        "json.dumps" | "json.dump" => {
            want(name, &args, 1, 2)?;
            let mut out = String::new();
            to_json(&args[0], indent.as_deref(), sort_keys, 0, &mut out)?;
            if name == "json.dump" {
                match args.get(1) {
                    Some(Value::File(f)) => {
                        methods::file_write(f, &out)?;
                        return Ok(Value::None);
                    }
                    _ => return Err(type_error("dump() missing file argument")),
                }
            }
            let _ = interp;
            Ok(Value::str(out))
        }
        _ => Err(exc("AttributeError", format!("unknown function {name}"))),
    }
}

fn json_reason(e: &serde_json::Error) -> &'static str {
    use serde_json::error::Category;
    match e.classify() {
        Category::Eof => "Expecting value",
        Category::Syntax => "Expecting value",
        _ => "Invalid JSON",
    }
}

// ---- re ------------------------------------------------------------------

const PATTERN_TAG: &str = "re.Pattern";

/// Compiled patterns travel as a tagged tuple `(tag, pattern, flags)`.
pub fn pattern_parts(v: &Value) -> Option<(Rc<str>, i64)> {
    match v {
        Value::Tuple(t)
            if t.len() == 3 && matches!(&t[0], Value::Type(n) if &**n == PATTERN_TAG) =>
        {
            match (&t[1], &t[2]) {
                (Value::Str(p), Value::Int(f)) => Some((p.clone(), *f)),
                _ => None,
            }
        }
        _ => None,
    }
}

pub const PATTERN_METHODS: &[&str] = &[
    "findall",
    "finditer",
    "fullmatch",
    "match",
    "search",
    "split",
    "sub",
];

fn compile_regex(pattern: &str, flags: i64) -> R<regex::Regex> {
    let mut b = regex::RegexBuilder::new(pattern);
    b.case_insensitive(flags & 2 != 0)
        .multi_line(flags & 8 != 0)
        .dot_matches_new_line(flags & 16 != 0)
        .ignore_whitespace(flags & 64 != 0);
    b.build().map_err(|e| {
        let msg = e.to_string();
        let line = msg
            .lines()
            .rev()
            .find(|l| l.starts_with("error:"))
            .unwrap_or(&msg)
            .trim_start_matches("error: ")
            .to_string();
        exc("error", line)
    })
}

fn make_match(re: &regex::Regex, caps: &regex::Captures, text: &str) -> Value {
    let whole = caps.get(0).map(|m| (m.start(), m.end())).unwrap_or((0, 0));
    let groups = (0..caps.len())
        .map(|i| caps.get(i).map(|m| m.as_str().to_string()))
        .collect();
    let named = re
        .capture_names()
        .flatten()
        .map(|n| (n.to_string(), caps.name(n).map(|m| m.as_str().to_string())))
        .collect();
    Value::Match(Rc::new(MatchObj {
        groups,
        named,
        start: text[..whole.0].chars().count(),
        end: text[..whole.1].chars().count(),
    }))
}

fn translate_repl(repl: &str) -> String {
    let mut out = String::new();
    let chars: Vec<char> = repl.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '$' {
            out.push_str("$$");
        } else if c == '\\' && i + 1 < chars.len() {
            let n = chars[i + 1];
            if n.is_ascii_digit() {
                let mut j = i + 1;
                let mut digits = String::new();
                while j < chars.len() && chars[j].is_ascii_digit() && digits.len() < 2 {
                    digits.push(chars[j]);
                    j += 1;
                }
                out.push_str(&format!("${{{digits}}}"));
                i = j;
                continue;
            }
            if n == 'g' && chars.get(i + 2) == Some(&'<') {
                if let Some(end) = chars[i + 3..].iter().position(|&c| c == '>') {
                    let name: String = chars[i + 3..i + 3 + end].iter().collect();
                    out.push_str(&format!("${{{name}}}"));
                    i += 4 + end;
                    continue;
                }
            }
            match n {
                'n' => out.push('\n'),
                't' => out.push('\t'),
                '\\' => out.push('\\'),
                other => {
                    out.push('\\');
                    out.push(other);
                }
            }
            i += 2;
            continue;
        } else {
            out.push(c);
        }
        i += 1;
    }
    out
}

fn regex_call(
    interp: &mut Interp,
    name: &str,
    args: Vec<Value>,
    mut kwargs: Vec<(String, Value)>,
) -> R<Value> {
    let short = name.trim_start_matches("re.");
    if short == "escape" {
        want(name, &args, 1, 1)?;
        return Ok(Value::str(regex::escape(&args[0].to_str())));
    }
    let flags_kw = take(&mut kwargs, "flags").and_then(|v| as_int(&v));
    let count_kw = take(&mut kwargs, "count").and_then(|v| as_int(&v));
    let maxsplit_kw = take(&mut kwargs, "maxsplit").and_then(|v| as_int(&v));
    if args.is_empty() {
        return Err(type_error(format!(
            "{short}() missing required argument 'pattern'"
        )));
    }
    let (pattern, mut flags) = match pattern_parts(&args[0]) {
        Some(p) => p,
        None => match &args[0] {
            Value::Str(s) => (s.clone(), 0),
            other => {
                return Err(type_error(format!(
                    "first argument must be string or compiled pattern, not {}",
                    other.type_name()
                )))
            }
        },
    };
    if short == "compile" {
        let f = args.get(1).and_then(as_int).or(flags_kw).unwrap_or(0);
        compile_regex(&pattern, f)?;
        return Ok(Value::tuple(vec![
            Value::Type(Rc::from(PATTERN_TAG)),
            Value::Str(pattern),
            Value::Int(f),
        ]));
    }
    let text_idx = if short == "sub" { 2 } else { 1 };
    let flag_idx = match short {
        "sub" => 4,
        "split" => 3,
        _ => 2,
    };
    flags |= args
        .get(flag_idx)
        .and_then(as_int)
        .or(flags_kw)
        .unwrap_or(0);
    let re = compile_regex(&pattern, flags)?;
    let text = match args.get(text_idx) {
        Some(Value::Str(s)) => s.clone(),
        Some(other) => {
            return Err(type_error(format!(
                "expected string or bytes-like object, got '{}'",
                other.type_name()
            )))
        }
        None => {
            return Err(type_error(format!(
                "{short}() missing required argument 'string'"
            )))
        }
    };
    match short {
        "search" => Ok(re
            .captures(&text)
            .map(|c| make_match(&re, &c, &text))
            .unwrap_or(Value::None)),
        "match" | "fullmatch" => {
            let anchored = if short == "match" {
                format!("^(?:{pattern})")
            } else {
                format!("^(?:{pattern})$")
            };
            let are = compile_regex(&anchored, flags & !8)?;
            Ok(are
                .captures(&text)
                .map(|c| make_match(&re, &c, &text))
                .unwrap_or(Value::None))
        }
        "findall" => {
            let groups = re.captures_len() - 1;
            let mut out = Vec::new();
            for caps in re.captures_iter(&text) {
                interp.tick()?;
                let g = |i: usize| Value::str(caps.get(i).map(|m| m.as_str()).unwrap_or(""));
                out.push(match groups {
                    0 => g(0),
                    1 => g(1),
                    n => Value::tuple((1..=n).map(g).collect()),
                });
            }
            Ok(Value::list(out))
        }
        "finditer" => {
            let mut out = Vec::new();
            for caps in re.captures_iter(&text) {
                interp.tick()?;
                out.push(make_match(&re, &caps, &text));
            }
            Ok(Value::list(out))
        }
        "sub" => {
            let count = args
                .get(3)
                .and_then(as_int)
                .or(count_kw)
                .unwrap_or(0)
                .max(0) as usize;
            match &args[1] {
                Value::Str(repl) => {
                    let r = translate_repl(repl);
                    Ok(Value::str(re.replacen(&text, count, r.as_str())))
                }
                f => {
                    let mut out = String::new();
                    let mut last = 0;
                    for (n, caps) in re.captures_iter(&text).enumerate() {
                        if count > 0 && n >= count {
                            break;
                        }
                        let m = caps.get(0).map(|m| (m.start(), m.end())).unwrap_or((0, 0));
                        out.push_str(&text[last..m.0]);
                        let rep =
                            interp.call(f, vec![make_match(&re, &caps, &text)], Vec::new())?;
                        out.push_str(&rep.to_str());
                        last = m.1;
                    }
                    out.push_str(&text[last..]);
                    Ok(Value::str(out))
                }
            }
        }
        "split" => {
            let maxsplit = args
                .get(2)
                .and_then(as_int)
                .or(maxsplit_kw)
                .unwrap_or(0)
                .max(0) as usize;
            let mut out = Vec::new();
            let mut last = 0;
            for (n, caps) in re.captures_iter(&text).enumerate() {
                if maxsplit > 0 && n >= maxsplit {
                    break;
                }
                let m = caps.get(0).map(|m| (m.start(), m.end())).unwrap_or((0, 0));
                out.push(Value::str(&text[last..m.0]));
                for i in 1..caps.len() {
                    out.push(
                        caps.get(i)
                            .map(|g| Value::str(g.as_str()))
                            .unwrap_or(Value::None),
                    );
                }
                last = m.1;
            }
            out.push(Value::str(&text[last..]));
            Ok(Value::list(out))
        }
        _ => Err(exc(
            "AttributeError",
            format!("module 're' has no attribute '{short}'"),
        )),
    }
}

/// Dispatches `pattern.method(...)` on a compiled pattern.
pub fn pattern_method(
    interp: &mut Interp,
    recv: &Value,
    name: &str,
    mut args: Vec<Value>,
    kwargs: Vec<(String, Value)>,
) -> R<Value> {
    let fname: &'static str = match name {
        "findall" => "re.findall",
        "finditer" => "re.finditer",
        "fullmatch" => "re.fullmatch",
        "match" => "re.match",
        "search" => "re.search",
        "split" => "re.split",
        "sub" => "re.sub",
        _ => {
            return Err(exc(
                "AttributeError",
                format!("'re.Pattern' object has no attribute '{name}'"),
            ))
        }
    };
    args.insert(0, recv.clone());
    regex_call(interp, fname, args, kwargs)
}
