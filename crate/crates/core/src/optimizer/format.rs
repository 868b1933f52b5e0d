use crate::class_model::parse_topology;

use super::{Assignment, Mode, OptimizerError, ProblemInstance, ThreadSet};

/// Parses a topology file extended with one `threads <nt>` line.
pub fn parse_instance(text: &str) -> Result<ProblemInstance, OptimizerError> {
    let mut threads = None;
    let mut rest = String::with_capacity(text.len());
    for (idx, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        let words: Vec<&str> = content.split_whitespace().collect();
        if words.first() == Some(&"threads") {
            let line = idx + 1;
            if threads.is_some() {
                return Err(OptimizerError::Syntax {
                    line,
                    msg: "duplicate `threads` line".into(),
                });
            }
            let nt = match words.as_slice() {
                [_, n] => n.parse::<usize>().map_err(|_| OptimizerError::Syntax {
                    line,
                    msg: format!("bad thread count `{n}`"),
                })?,
                _ => {
                    return Err(OptimizerError::Syntax {
                        line,
                        msg: "expected `threads <n>`".into(),
                    })
                }
            };
            threads = Some(nt);
            rest.push('\n');
        } else {
            rest.push_str(raw);
            rest.push('\n');
        }
    }
    let classes = parse_topology(&rest)?;
    let nt = threads.ok_or(OptimizerError::Syntax {
        line: 0,
        msg: "missing `threads <n>` line".into(),
    })?;
    ProblemInstance::new(classes, nt)
}

pub fn serialize_instance(inst: &ProblemInstance) -> String {
    format!(
        "{}threads {}\n",
        inst.classes().to_topology_text(),
        inst.threads()
    )
}

/// One `assign <class> <Seq|Cnc> <t0,t1,...>` line per class.
pub fn serialize_assignment(inst: &ProblemInstance, a: &Assignment) -> String {
    let mut out = String::new();
    for (c, name) in inst.classes().names().iter().enumerate() {
        let threads: Vec<String> = a.uses[c].iter().map(|t| t.to_string()).collect();
        out.push_str(&format!(
            "assign {name} {} {}\n",
            a.modes[c],
            threads.join(",")
        ));
    }
    out
}

pub fn parse_assignment(inst: &ProblemInstance, text: &str) -> Result<Assignment, OptimizerError> {
    let n = inst.num_classes();
    let mut modes = vec![None; n];
    let mut uses = vec![ThreadSet::EMPTY; n];
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let words: Vec<&str> = content.split_whitespace().collect();
        let (name, mode, list) = match words.as_slice() {
            ["assign", name, mode, list] => (*name, *mode, *list),
            ["assign", name, mode] => (*name, *mode, ""),
            _ => {
                return Err(OptimizerError::Syntax {
                    line,
                    msg: format!("unrecognized line `{content}`"),
                })
            }
        };
        let c = inst
            .classes()
            .index_of(name)
            .ok_or_else(|| OptimizerError::UnknownClass {
                line,
                name: name.to_string(),
            })?
            .0;
        if modes[c].is_some() {
            return Err(OptimizerError::Syntax {
                line,
                msg: format!("class `{name}` assigned twice"),
            });
        }
        modes[c] = Some(match mode {
            "Seq" => Mode::Seq,
            "Cnc" => Mode::Cnc,
            other => {
                return Err(OptimizerError::Syntax {
                    line,
                    msg: format!("bad mode `{other}`"),
                })
            }
        });
        for tok in list.split(',').filter(|s| !s.is_empty()) {
            let t: usize = tok.parse().map_err(|_| OptimizerError::Syntax {
                line,
                msg: format!("bad thread index `{tok}`"),
            })?;
            if t >= inst.threads() {
                return Err(OptimizerError::ThreadOutOfRange {
                    thread: t,
                    threads: inst.threads(),
                });
            }
            uses[c].insert(t);
        }
    }
    let modes = modes
        .into_iter()
        .enumerate()
        .map(|(c, m)| {
            m.ok_or_else(|| OptimizerError::Syntax {
                line: 0,
                msg: format!("class `{}` has no assignment", inst.classes().names()[c]),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Assignment { modes, uses })
}
