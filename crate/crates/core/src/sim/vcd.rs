// SPDX-License-Identifier: Apache-2.0

//! Value change dump output for [`EventTrace`]s.
//!
//! The header carries no date or version stamp so identical traces always
//! produce identical bytes.

use std::io::{self, Write};

use super::{Edge, EventTrace, Pin, SignalId, StageNet};
use crate::model::PipelineSpec;

/// Short printable identifier for the `index`-th variable.
fn id_code(mut index: usize) -> String {
    const FIRST: u8 = b'!';
    const RADIX: usize = (b'~' - b'!' + 1) as usize;
    let mut code = Vec::new();
    loop {
        code.push(FIRST + (index % RADIX) as u8);
        index /= RADIX;
        if index == 0 {
            break;
        }
        index -= 1;
    }
    String::from_utf8(code).expect("ascii")
}

fn scope_name(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_whitespace() { '_' } else { c })
        .collect()
}

/// Variable order: pins, then each stage's nets in stage order.
fn signals(pipeline: &PipelineSpec) -> Vec<SignalId> {
    let mut out: Vec<SignalId> = Pin::ALL.iter().map(|&p| SignalId::Pin(p)).collect();
    for i in 0..pipeline.len() {
        out.extend(StageNet::ALL.iter().map(|&n| SignalId::Stage(i, n)));
    }
    out
}

pub fn write_vcd<W: Write>(
    mut w: W,
    trace: &EventTrace,
    pipeline: &PipelineSpec,
) -> io::Result<()> {
    let vars = signals(pipeline);
    let code_of = |s: SignalId| {
        let idx = vars
            .iter()
            .position(|&v| v == s)
            .expect("signal outside pipeline");
        id_code(idx)
    };

    writeln!(w, "$timescale 1 ps $end")?;
    writeln!(w, "$scope module pipeline $end")?;
    for &p in &Pin::ALL {
        writeln!(
            w,
            "$var wire 1 {} {} $end",
            code_of(SignalId::Pin(p)),
            p.name()
        )?;
    }
    for (i, stage) in pipeline.stages().iter().enumerate() {
        writeln!(w, "$scope module {} $end", scope_name(&stage.name))?;
        for &net in &StageNet::ALL {
            writeln!(
                w,
                "$var wire 1 {} {} $end",
                code_of(SignalId::Stage(i, net)),
                net.name()
            )?;
        }
        writeln!(w, "$upscope $end")?;
    }
    writeln!(w, "$upscope $end")?;
    writeln!(w, "$enddefinitions $end")?;

    writeln!(w, "#0")?;
    writeln!(w, "$dumpvars")?;
    for idx in 0..vars.len() {
        writeln!(w, "0{}", id_code(idx))?;
    }
    writeln!(w, "$end")?;

    let mut current = 0u64;
    for e in trace.events() {
        let t = e.time.as_ps();
        if t != current {
            writeln!(w, "#{t}")?;
            current = t;
        }
        let value = match e.edge {
            Edge::Rise => '1',
            Edge::Fall => '0',
        };
        writeln!(w, "{value}{}", code_of(e.signal))?;
    }
    Ok(())
}

pub fn emit_vcd(trace: &EventTrace, pipeline: &PipelineSpec) -> Vec<u8> {
    let mut buf = Vec::new();
    write_vcd(&mut buf, trace, pipeline).expect("writing to a Vec cannot fail");
    buf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_codes_are_unique_and_printable() {
        let codes: Vec<String> = (0..500).map(id_code).collect();
        let unique: std::collections::HashSet<_> = codes.iter().collect();
        assert_eq!(unique.len(), codes.len());
        assert_eq!(codes[0], "!");
        assert_eq!(codes[93], "~");
        assert_eq!(codes[94], "!!");
        assert!(codes
            .iter()
            .all(|c| c.bytes().all(|b| (33..=126).contains(&b))));
    }

    #[test]
    fn empty_trace_is_header_and_zeroes() {
        let p = PipelineSpec::from_delays(&[(1, 1), (1, 1)]).unwrap();
        let text = String::from_utf8(emit_vcd(&EventTrace::default(), &p)).unwrap();
        assert!(text.starts_with("$timescale 1 ps $end\n"));
        assert!(
            text.ends_with("$dumpvars\n0!\n0\"\n0#\n0$\n0%\n0&\n0'\n0(\n0)\n0*\n0+\n0,\n$end\n")
        );
        assert!(text.contains("$scope module C1 $end"));
    }
}
