//! Plain-text rendering of a JSON report for `--pretty`.

use serde_json::Value;

fn scalar(v: &Value) -> String {
    match v {
        Value::Null => "-".into(),
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => format!("{f:.6}"),
            _ => n.to_string(),
        },
        Value::String(s) => s.clone(),
        Value::Bool(b) => b.to_string(),
        other => other.to_string(),
    }
}

fn table(items: &[Value], out: &mut String, indent: &str) {
    let Some(Value::Object(first)) = items.first() else {
        return;
    };
    let cols: Vec<&String> = first
        .keys()
        .filter(|k| !matches!(first[*k], Value::Object(_) | Value::Array(_)))
        .collect();
    let cells: Vec<Vec<String>> = items
        .iter()
        .map(|it| cols.iter().map(|c| scalar(it.get(c.as_str()).unwrap_or(&Value::Null))).collect())
        .collect();
    let widths: Vec<usize> = cols
        .iter()
        .enumerate()
        .map(|(i, c)| cells.iter().map(|r| r[i].len()).max().unwrap_or(0).max(c.len()))
        .collect();
    let line = |vals: Vec<&str>| -> String {
        let parts: Vec<String> = vals.iter().zip(&widths).map(|(v, w)| format!("{v:>w$}")).collect();
        format!("{indent}{}\n", parts.join("  "))
    };
    out.push_str(&line(cols.iter().map(|c| c.as_str()).collect()));
    for r in &cells {
        out.push_str(&line(r.iter().map(|s| s.as_str()).collect()));
    }
}

fn render_into(v: &Value, out: &mut String, indent: &str) {
    let Value::Object(map) = v else {
        out.push_str(&format!("{indent}{}\n", scalar(v)));
        return;
    };
    let deeper = format!("{indent}  ");
    for (k, val) in map {
        match val {
            Value::Object(_) => {
                out.push_str(&format!("{indent}{k}:\n"));
                render_into(val, out, &deeper);
            }
            Value::Array(items) if items.iter().all(Value::is_object) && !items.is_empty() => {
                out.push_str(&format!("{indent}{k}:\n"));
                table(items, out, &deeper);
            }
            Value::Array(items) => {
                let shown: Vec<String> = items
                    .iter()
                    .map(|x| match x {
                        Value::Array(row) => format!("[{}]", row.iter().map(scalar).collect::<Vec<_>>().join(", ")),
                        other => scalar(other),
                    })
                    .collect();
                out.push_str(&format!("{indent}{k}: [{}]\n", shown.join(", ")));
            }
            _ => out.push_str(&format!("{indent}{k}: {}\n", scalar(val))),
        }
    }
}

pub fn render(v: &Value) -> String {
    let mut out = String::new();
    render_into(v, &mut out, "");
    out
}
