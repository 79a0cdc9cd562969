#!/usr/bin/env python3
"""Assemble an RV64 source file with clang and print an objdump-style listing.

Each instruction line of the source must assemble to exactly one 4-byte word
(no compressed or multi-word pseudo-instructions). The printed mnemonic and
operands are taken from the source text, so the listing can be cross-checked
against an independent decoder.

usage: asm2objdump.py SOURCE.s BASE_ADDR [NAME]
"""
import os
import re
import struct
import subprocess
import sys
import tempfile


def text_words(obj):
    d = open(obj, "rb").read()
    shoff = struct.unpack_from("<Q", d, 0x28)[0]
    shentsize, shnum, shstrndx = struct.unpack_from("<HHH", d, 0x3A)
    secs = [struct.unpack_from("<IIQQQQIIQQ", d, shoff + i * shentsize) for i in range(shnum)]
    strtab = secs[shstrndx]

    def name(off):
        s = d[strtab[4] + off:]
        return s[: s.index(b"\0")].decode()

    for s in secs:
        if name(s[0]) == ".text":
            b = d[s[4]: s[4] + s[5]]
            return [struct.unpack_from("<I", b, i)[0] for i in range(0, len(b), 4)]
    raise SystemExit("no .text section")


def main():
    src, base = sys.argv[1], int(sys.argv[2], 0)
    prog = sys.argv[3] if len(sys.argv) > 3 else os.path.splitext(os.path.basename(src))[0]
    with tempfile.TemporaryDirectory() as tmp:
        obj = os.path.join(tmp, "out.o")
        subprocess.run(
            ["clang", "--target=riscv64-unknown-elf", "-march=rv64im", "-mno-relax",
             "-c", src, "-o", obj],
            check=True,
        )
        words = text_words(obj)

    items = []  # ('label', name) | ('insn', mnemonic, operands)
    for line in open(src):
        line = line.split("#")[0].strip()
        m = re.match(r"^([A-Za-z_.][\w.]*):\s*(.*)$", line)
        if not line or (line.startswith(".") and not m):
            continue
        if m:
            items.append(("label", m.group(1)))
            line = m.group(2).strip()
            if not line:
                continue
        parts = line.split(None, 1)
        ops = parts[1].replace(" ", "") if len(parts) > 1 else ""
        items.append(("insn", parts[0], ops))

    n_insn = sum(1 for it in items if it[0] == "insn")
    if n_insn != len(words):
        raise SystemExit(f"{n_insn} source instructions but {len(words)} words")

    # label -> (address, enclosing global symbol, offset)
    labels, addr, sym = {}, base, None
    for it in items:
        if it[0] == "label":
            if not it[1].startswith(".L"):
                sym = (it[1], addr)
            labels[it[1]] = (addr, sym)
        else:
            addr += 4

    def render_target(op):
        if op not in labels:
            return op
        target, (name, start) = labels[op]
        off = target - start
        return f"{target:x} <{name}+0x{off:x}>" if off else f"{target:x} <{name}>"

    out = [f"\n{prog}:     file format elf64-littleriscv\n", "", "Disassembly of section .text:"]
    addr, k = base, 0
    for it in items:
        if it[0] == "label":
            if not it[1].startswith(".L"):
                out.append(f"\n{addr:016x} <{it[1]}>:")
            continue
        w = words[k]
        k += 1
        operands = it[2].split(",") if it[2] else []
        if operands:
            operands[-1] = render_target(operands[-1])
        ops = "\t" + ",".join(operands) if operands else ""
        out.append(f"{addr:8x}:\t{w:08x}          \t{it[1]}{ops}")
        addr += 4
    print("\n".join(out))


if __name__ == "__main__":
    main()
