//! Format-spec mini-language, `%` formatting and `str.format`.

use crate::interp::{as_int, exc, type_error, Interp, R};
use crate::value::{float_repr, Key, Value};

#[derive(Debug, Default)]
struct Spec {
    fill: Option<char>,
    align: Option<char>,
    sign: Option<char>,
    alt: bool,
    zero: bool,
    width: usize,
    grouping: Option<char>,
    precision: Option<usize>,
    ty: Option<char>,
}

fn bad_spec(spec: &str) -> crate::interp::Unwind {
    exc("ValueError", format!("Invalid format specifier '{spec}'"))
}

fn parse_spec(spec: &str) -> R<Spec> {
    let chars: Vec<char> = spec.chars().collect();
    let mut s = Spec::default();
    let mut i = 0;
    let is_align = |c: char| matches!(c, '<' | '>' | '^' | '=');
    if chars.len() >= 2 && is_align(chars[1]) {
        s.fill = Some(chars[0]);
        s.align = Some(chars[1]);
        i = 2;
    } else if !chars.is_empty() && is_align(chars[0]) {
        s.align = Some(chars[0]);
        i = 1;
    }
    if i < chars.len() && matches!(chars[i], '+' | '-' | ' ') {
        s.sign = Some(chars[i]);
        i += 1;
    }
    if i < chars.len() && chars[i] == '#' {
        s.alt = true;
        i += 1;
    }
    if i < chars.len() && chars[i] == '0' {
        s.zero = true;
        i += 1;
    }
    let start = i;
    while i < chars.len() && chars[i].is_ascii_digit() {
        i += 1;
    }
    if i > start {
        s.width = chars[start..i]
            .iter()
            .collect::<String>()
            .parse()
            .map_err(|_| bad_spec(spec))?;
    }
    if i < chars.len() && matches!(chars[i], ',' | '_') {
        s.grouping = Some(chars[i]);
        i += 1;
    }
    if i < chars.len() && chars[i] == '.' {
        i += 1;
        let start = i;
        while i < chars.len() && chars[i].is_ascii_digit() {
            i += 1;
        }
        if i == start {
            return Err(exc("ValueError", "Format specifier missing precision"));
        }
        s.precision = Some(
            chars[start..i]
                .iter()
                .collect::<String>()
                .parse()
                .map_err(|_| bad_spec(spec))?,
        );
    }
    if i < chars.len() {
        s.ty = Some(chars[i]);
        i += 1;
    }
    if i != chars.len() {
        return Err(bad_spec(spec));
    }
    Ok(s)
}

fn group_digits(int_part: &str, sep: char) -> String {
    let bytes = int_part.as_bytes();
    let mut out = String::with_capacity(int_part.len() + int_part.len() / 3);
    for (i, b) in bytes.iter().enumerate() {
        if i > 0 && (bytes.len() - i).is_multiple_of(3) {
            out.push(sep);
        }
        out.push(*b as char);
    }
    out
}

/// Pads `body` (which carries no sign) according to the spec.
fn pad(spec: &Spec, sign: &str, body: &str, default_align: char) -> String {
    let mut align = spec.align.unwrap_or(default_align);
    let mut fill = spec.fill.unwrap_or(' ');
    if spec.zero && spec.align.is_none() {
        align = '=';
        fill = '0';
    }
    let len = sign.chars().count() + body.chars().count();
    if len >= spec.width {
        return format!("{sign}{body}");
    }
    let n = spec.width - len;
    let fills = |k: usize| std::iter::repeat_n(fill, k).collect::<String>();
    match align {
        '<' => format!("{sign}{body}{}", fills(n)),
        '^' => format!("{}{sign}{body}{}", fills(n / 2), fills(n - n / 2)),
        '=' => format!("{sign}{}{body}", fills(n)),
        _ => format!("{}{sign}{body}", fills(n)),
    }
}

fn sign_str(negative: bool, spec: &Spec) -> &'static str {
    if negative {
        "-"
    } else {
        match spec.sign {
            Some('+') => "+",
            Some(' ') => " ",
            _ => "",
        }
    }
}

/// Python-style exponent: at least two digits, explicit sign.
fn fix_exponent(s: &str, upper: bool) -> String {
    match s.split_once('e') {
        Some((m, e)) => {
            let n: i32 = e.parse().unwrap_or(0);
            let mark = if upper { 'E' } else { 'e' };
            format!("{m}{mark}{}{:02}", if n < 0 { '-' } else { '+' }, n.abs())
        }
        None => s.to_string(),
    }
}

fn format_g(x: f64, precision: usize, alt: bool, upper: bool) -> String {
    let p = precision.max(1);
    if x == 0.0 {
        return if alt {
            format!("{:.*}", p - 1, 0.0)
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.*e}", p - 1, x);
    let exp: i32 = sci
        .split_once('e')
        .map(|(_, e)| e.parse().unwrap_or(0))
        .unwrap_or(0);
    let mut out = if exp >= -4 && exp < p as i32 {
        format!("{:.*}", (p as i32 - 1 - exp).max(0) as usize, x)
    } else {
        sci
    };
    if !alt {
        let (mant, exp_part) = match out.find('e') {
            Some(i) => (out[..i].to_string(), out[i..].to_string()),
            None => (out.clone(), String::new()),
        };
        let mant = if mant.contains('.') {
            mant.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            mant
        };
        out = format!("{mant}{exp_part}");
    }
    fix_exponent(&out, upper)
}

fn format_float(x: f64, spec: &Spec) -> R<String> {
    let upper = matches!(spec.ty, Some('E' | 'F' | 'G'));
    let negative = x.is_sign_negative() && !(x == 0.0 && spec.ty.is_none());
    let a = x.abs();
    let body = if a.is_nan() {
        if upper {
            "NAN".into()
        } else {
            "nan".into()
        }
    } else if a.is_infinite() {
        if upper {
            "INF".into()
        } else {
            "inf".into()
        }
    } else {
        match spec.ty {
            Some('f' | 'F') => format!("{:.*}", spec.precision.unwrap_or(6), a),
            Some('e' | 'E') => {
                fix_exponent(&format!("{:.*e}", spec.precision.unwrap_or(6), a), upper)
            }
            Some('%') => format!("{:.*}%", spec.precision.unwrap_or(6), a * 100.0),
            Some('g' | 'G') => format_g(a, spec.precision.unwrap_or(6), spec.alt, upper),
            None | Some('n') => match spec.precision {
                Some(p) => {
                    let mut g = format_g(a, p, spec.alt, false);
                    if !g.contains(['.', 'e']) {
                        g.push_str(".0");
                    }
                    g
                }
                None => float_repr(a),
            },
            Some(t) => {
                return Err(exc(
                    "ValueError",
                    format!("Unknown format code '{t}' for object of type 'float'"),
                ))
            }
        }
    };
    let body = match spec.grouping {
        Some(sep) if a.is_finite() => {
            let digits_end = body
                .find(|c: char| !c.is_ascii_digit())
                .unwrap_or(body.len());
            format!(
                "{}{}",
                group_digits(&body[..digits_end], sep),
                &body[digits_end..]
            )
        }
        _ => body,
    };
    Ok(pad(
        spec,
        sign_str(negative && !a.is_nan(), spec),
        &body,
        '>',
    ))
}

fn format_int(i: i64, spec: &Spec) -> R<String> {
    match spec.ty {
        Some('f' | 'F' | 'e' | 'E' | 'g' | 'G' | '%') => return format_float(i as f64, spec),
        Some('c') => {
            let c = char::from_u32(i as u32)
                .ok_or_else(|| exc("OverflowError", "%c arg not in range(0x110000)"))?;
            return Ok(pad(spec, "", &c.to_string(), '<'));
        }
        _ => {}
    }
    if spec.precision.is_some() {
        return Err(exc(
            "ValueError",
            "Precision not allowed in integer format specifier",
        ));
    }
    let a = i.unsigned_abs();
    let (digits, prefix) = match spec.ty {
        None | Some('d') | Some('n') => (a.to_string(), ""),
        Some('x') => (format!("{a:x}"), "0x"),
        Some('X') => (format!("{a:X}"), "0X"),
        Some('o') => (format!("{a:o}"), "0o"),
        Some('b') => (format!("{a:b}"), "0b"),
        Some(t) => {
            return Err(exc(
                "ValueError",
                format!("Unknown format code '{t}' for object of type 'int'"),
            ))
        }
    };
    let digits = match spec.grouping {
        Some(sep) => group_digits(&digits, sep),
        None => digits,
    };
    let sign = sign_str(i < 0, spec);
    let sign = if spec.alt {
        format!("{sign}{prefix}")
    } else {
        sign.to_string()
    };
    Ok(pad(spec, &sign, &digits, '>'))
}

/// `format(value, spec)`
pub fn format_value(v: &Value, spec: &str) -> R<String> {
    if spec.is_empty() {
        return Ok(v.to_str());
    }
    let s = parse_spec(spec)?;
    match v {
        Value::Bool(b) if s.ty.is_none() => Ok(pad(&s, "", if *b { "True" } else { "False" }, '<')),
        Value::Int(_) | Value::Bool(_) => format_int(as_int(v).unwrap_or(0), &s),
        Value::Float(f) => format_float(*f, &s),
        Value::Str(st) => {
            if !matches!(s.ty, None | Some('s')) {
                return Err(exc(
                    "ValueError",
                    format!(
                        "Unknown format code '{}' for object of type 'str'",
                        s.ty.unwrap_or('?')
                    ),
                ));
            }
            let body: String = match s.precision {
                Some(p) => st.chars().take(p).collect(),
                None => st.to_string(),
            };
            Ok(pad(&s, "", &body, '<'))
        }
        other => {
            if s.ty.is_none() && s.precision.is_none() {
                Ok(pad(&s, "", &other.to_str(), '<'))
            } else {
                Err(type_error(format!(
                    "unsupported format string passed to {}.__format__",
                    other.type_name()
                )))
            }
        }
    }
}

/// `fmt % args`
pub fn percent_format(interp: &mut Interp, fmt: &str, args: &Value) -> R<String> {
    let mapping = matches!(args, Value::Dict(_));
    let items: Vec<Value> = match args {
        Value::Tuple(t) => t.as_ref().clone(),
        other => vec![other.clone()],
    };
    let mut next = 0usize;
    let mut out = String::new();
    let chars: Vec<char> = fmt.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c != '%' {
            out.push(c);
            i += 1;
            continue;
        }
        i += 1;
        if i >= chars.len() {
            return Err(exc("ValueError", "incomplete format"));
        }
        let mut key = None;
        if chars[i] == '(' {
            let end = chars[i..]
                .iter()
                .position(|&c| c == ')')
                .ok_or_else(|| exc("ValueError", "incomplete format key"))?;
            key = Some(chars[i + 1..i + end].iter().collect::<String>());
            i += end + 1;
        }
        let mut flags = String::new();
        while i < chars.len() && matches!(chars[i], '-' | '+' | ' ' | '0' | '#') {
            flags.push(chars[i]);
            i += 1;
        }
        let mut width = String::new();
        while i < chars.len() && chars[i].is_ascii_digit() {
            width.push(chars[i]);
            i += 1;
        }
        let mut precision = None;
        if i < chars.len() && chars[i] == '.' {
            i += 1;
            let mut p = String::new();
            while i < chars.len() && chars[i].is_ascii_digit() {
                p.push(chars[i]);
                i += 1;
            }
            precision = Some(p.parse::<usize>().unwrap_or(0));
        }
        let Some(&ty) = chars.get(i) else {
            return Err(exc("ValueError", "incomplete format"));
        };
        i += 1;
        if ty == '%' {
            out.push('%');
            continue;
        }
        let value = match &key {
            Some(k) => {
                let Value::Dict(d) = args else {
                    return Err(type_error("format requires a mapping"));
                };
                let hk = Key::Str(k.as_str().into());
                match d.borrow().get(&hk) {
                    Some((_, v)) => v.clone(),
                    None => return Err(exc("KeyError", format!("'{k}'"))),
                }
            }
            None if mapping => args.clone(),
            None => {
                let v = items
                    .get(next)
                    .cloned()
                    .ok_or_else(|| type_error("not enough arguments for format string"))?;
                next += 1;
                v
            }
        };
        let mut spec = String::new();
        if flags.contains('-') {
            spec.push('<');
        } else {
            spec.push('>');
        }
        if flags.contains('+') {
            spec.push('+');
        } else if flags.contains(' ') {
            spec.push(' ');
        }
        if flags.contains('#') {
            spec.push('#');
        }
        if flags.contains('0') && !flags.contains('-') {
            spec.clear();
            if flags.contains('+') {
                spec.push('+');
            }
            spec.push('0');
        }
        spec.push_str(&width);
        let piece = match ty {
            's' => format_value(
                &Value::str(value.to_str()),
                &format!(
                    "{spec}{}",
                    precision.map(|p| format!(".{p}")).unwrap_or_default()
                ),
            )?,
            'r' | 'a' => format_value(&Value::str(value.repr()), &spec)?,
            'd' | 'i' | 'u' => {
                let n = match &value {
                    Value::Float(f) => f.trunc() as i64,
                    other => as_int(other).ok_or_else(|| {
                        type_error(format!(
                            "%{ty} format: a real number is required, not {}",
                            other.type_name()
                        ))
                    })?,
                };
                format_value(&Value::Int(n), &spec)?
            }
            'x' | 'X' | 'o' => {
                let n = as_int(&value).ok_or_else(|| {
                    type_error(format!(
                        "%{ty} format: an integer is required, not {}",
                        value.type_name()
                    ))
                })?;
                format_value(&Value::Int(n), &format!("{spec}{ty}"))?
            }
            'f' | 'F' | 'e' | 'E' | 'g' | 'G' => {
                let x = crate::interp::as_float(&value).ok_or_else(|| {
                    type_error(format!("must be real number, not {}", value.type_name()))
                })?;
                format_value(
                    &Value::Float(x),
                    &format!("{spec}.{}{ty}", precision.unwrap_or(6)),
                )?
            }
            'c' => match &value {
                Value::Str(s) => s.to_string(),
                other => format_value(other, "c")?,
            },
            other => {
                return Err(exc(
                    "ValueError",
                    format!("unsupported format character '{other}'"),
                ))
            }
        };
        out.push_str(&piece);
    }
    if !mapping && next < items.len() {
        return Err(type_error(
            "not all arguments converted during string formatting",
        ));
    }
    let _ = interp;
    Ok(out)
}

/// `fmt.format(*args, **kwargs)`
pub fn str_format(
    interp: &mut Interp,
    fmt: &str,
    args: &[Value],
    kwargs: &[(String, Value)],
) -> R<String> {
    let chars: Vec<char> = fmt.chars().collect();
    let mut out = String::new();
    let mut auto = 0usize;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '{' {
            if chars.get(i + 1) == Some(&'{') {
                out.push('{');
                i += 2;
                continue;
            }
            let mut depth = 1;
            let mut j = i + 1;
            while j < chars.len() {
                match chars[j] {
                    '{' => depth += 1,
                    '}' => {
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                    _ => {}
                }
                j += 1;
            }
            if j >= chars.len() {
                return Err(exc("ValueError", "expected '}' before end of string"));
            }
            let field: String = chars[i + 1..j].iter().collect();
            out.push_str(&format_field(interp, &field, args, kwargs, &mut auto)?);
            i = j + 1;
        } else if c == '}' {
            if chars.get(i + 1) == Some(&'}') {
                out.push('}');
                i += 2;
                continue;
            }
            return Err(exc("ValueError", "Single '}' encountered in format string"));
        } else {
            out.push(c);
            i += 1;
        }
    }
    Ok(out)
}

fn format_field(
    interp: &mut Interp,
    field: &str,
    args: &[Value],
    kwargs: &[(String, Value)],
    auto: &mut usize,
) -> R<String> {
    let (head, spec) = match field.find(':') {
        Some(p) => (&field[..p], &field[p + 1..]),
        None => (field, ""),
    };
    let (name, conv) = match head.find('!') {
        Some(p) => (&head[..p], head[p + 1..].chars().next()),
        None => (head, None),
    };
    let split = name.find(['.', '[']).unwrap_or(name.len());
    let (base, mut rest) = name.split_at(split);
    let mut value = if base.is_empty() {
        let v = args.get(*auto).cloned().ok_or_else(|| {
            exc(
                "IndexError",
                format!(
                    "Replacement index {} out of range for positional args tuple",
                    *auto
                ),
            )
        })?;
        *auto += 1;
        v
    } else if let Ok(n) = base.parse::<usize>() {
        args.get(n).cloned().ok_or_else(|| {
            exc(
                "IndexError",
                format!("Replacement index {n} out of range for positional args tuple"),
            )
        })?
    } else {
        kwargs
            .iter()
            .find(|(k, _)| k == base)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| exc("KeyError", format!("'{base}'")))?
    };
    while !rest.is_empty() {
        if let Some(r) = rest.strip_prefix('.') {
            let end = r.find(['.', '[']).unwrap_or(r.len());
            value = interp.get_attr(&value, &r[..end])?;
            rest = &r[end..];
        } else if let Some(r) = rest.strip_prefix('[') {
            let end = r
                .find(']')
                .ok_or_else(|| exc("ValueError", "Missing ']' in format string"))?;
            let key = &r[..end];
            let idx = match key.parse::<i64>() {
                Ok(n) => Value::Int(n),
                Err(_) => Value::str(key),
            };
            value = interp.get_item(&value, &idx)?;
            rest = &r[end + 1..];
        } else {
            break;
        }
    }
    let value = match conv {
        Some('r') | Some('a') => Value::str(value.repr()),
        Some('s') => Value::str(value.to_str()),
        _ => value,
    };
    let spec = if spec.contains('{') {
        str_format(interp, spec, args, kwargs)?
    } else {
        spec.to_string()
    };
    format_value(&value, &spec)
}
