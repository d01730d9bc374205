use crate::value::{Document, Value};

/// Strict lookup through nested objects only.
pub fn get_path<'a>(doc: &'a Document, segs: &[String]) -> Option<&'a Value> {
    let (first, rest) = segs.split_first()?;
    let mut cur = doc.get(first)?;
    for seg in rest {
        cur = cur.as_object()?.get(seg)?;
    }
    Some(cur)
}

/// Sets a nested field, creating (or replacing non-object) intermediates.
pub fn set_path(doc: &mut Document, segs: &[String], value: Value) {
    let (first, rest) = segs.split_first().expect("non-empty path");
    if rest.is_empty() {
        doc.insert(first.clone(), value);
        return;
    }
    let slot = doc
        .entry(first.clone())
        .or_insert_with(|| Value::Object(Document::new()));
    if !matches!(slot, Value::Object(_)) {
        *slot = Value::Object(Document::new());
    }
    let Value::Object(inner) = slot else {
        unreachable!()
    };
    set_path(inner, rest, value);
}

/// Removes a field, descending into arrays of objects.
pub(crate) fn remove_path(doc: &mut Document, segs: &[String]) {
    let (first, rest) = segs.split_first().expect("non-empty path");
    if rest.is_empty() {
        doc.shift_remove(first);
        return;
    }
    if let Some(v) = doc.get_mut(first) {
        remove_in_value(v, rest);
    }
}

fn remove_in_value(v: &mut Value, segs: &[String]) {
    match v {
        Value::Object(d) => remove_path(d, segs),
        Value::Array(xs) => xs.iter_mut().for_each(|x| remove_in_value(x, segs)),
        _ => {}
    }
}

/// Values a filter comparison sees at `segs`: arrays along the path are
/// traversed element-wise, and an array at the end contributes both itself
/// and its elements.
pub(crate) fn match_candidates<'a>(doc: &'a Document, segs: &[String]) -> Vec<&'a Value> {
    let mut out = Vec::new();
    if let Some((first, rest)) = segs.split_first() {
        if let Some(v) = doc.get(first) {
            collect(v, rest, &mut out);
        }
    }
    out
}

fn collect<'a>(v: &'a Value, rest: &[String], out: &mut Vec<&'a Value>) {
    match rest.split_first() {
        None => {
            out.push(v);
            if let Value::Array(xs) = v {
                out.extend(xs.iter());
            }
        }
        Some((seg, tail)) => match v {
            Value::Object(d) => {
                if let Some(next) = d.get(seg) {
                    collect(next, tail, out);
                }
            }
            Value::Array(xs) => {
                for x in xs {
                    if let Value::Object(d) = x {
                        if let Some(next) = d.get(seg) {
                            collect(next, tail, out);
                        }
                    }
                }
            }
            _ => {}
        },
    }
}

/// Aggregation-expression path semantics: `$a.b` over an array `a` yields
/// the array of the elements' `b` values, skipping elements without one.
pub(crate) fn eval_path(doc: &Document, segs: &[String]) -> Option<Value> {
    let (first, rest) = segs.split_first()?;
    eval_in(doc.get(first)?, rest)
}

fn eval_in(v: &Value, segs: &[String]) -> Option<Value> {
    let Some((seg, rest)) = segs.split_first() else {
        return Some(v.clone());
    };
    match v {
        Value::Object(d) => eval_in(d.get(seg)?, rest),
        Value::Array(xs) => Some(Value::Array(
            xs.iter().filter_map(|x| eval_in(x, segs)).collect(),
        )),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc;

    fn segs(p: &str) -> Vec<String> {
        p.split('.').map(str::to_owned).collect()
    }

    #[test]
    fn candidates_traverse_arrays() {
        let d = doc! {"a" => Value::Array(vec![
            Value::Object(doc! {"b" => 1i64}),
            Value::Object(doc! {"b" => Value::Array(vec![2i64.into(), 3i64.into()])}),
            Value::Int(7),
        ])};
        let c = match_candidates(&d, &segs("a.b"));
        assert_eq!(c.len(), 4);
        assert!(match_candidates(&d, &segs("a.x")).is_empty());
        assert_eq!(
            eval_path(&d, &segs("a.b")),
            Some(Value::Array(vec![
                1i64.into(),
                Value::Array(vec![2i64.into(), 3i64.into()])
            ]))
        );
    }

    #[test]
    fn set_and_remove() {
        let mut d = doc! {"a" => 1i64};
        set_path(&mut d, &segs("a.b.c"), Value::Bool(true));
        assert_eq!(get_path(&d, &segs("a.b.c")), Some(&Value::Bool(true)));
        remove_path(&mut d, &segs("a.b"));
        assert_eq!(d, doc! {"a" => Value::Object(Document::new())});
    }
}
