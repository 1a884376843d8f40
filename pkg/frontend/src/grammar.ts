/**
 * Client-side taxonomy-code validation, driven by the same grammar
 * description file the backend ships. The server remains authoritative;
 * this validator exists so bad codes are caught before they are posted.
 */

import { GRAMMAR } from "./grammar_data.js";

export type Validation =
  | { state: "valid"; canonical: string }
  | { state: "incomplete"; hint: string }
  | { state: "invalid"; message: string };

interface SegmentRule {
  letter: string;
  name: string;
  values: readonly string[];
}

interface TopRule {
  form: readonly string[] | null;
  segments: readonly SegmentRule[];
  suffix: {
    name: string;
    values: readonly string[];
    after_segment: string;
    allowed_segment_values: readonly string[];
    optional: boolean;
  } | null;
}

const TOPS: Record<string, TopRule> = GRAMMAR.tops as unknown as Record<string, TopRule>;
const SEP: string = GRAMMAR.separator;

export function validateCode(text: string): Validation {
  if (text.length === 0) {
    return { state: "incomplete", hint: `enter a top-level category (${Object.keys(TOPS).join(", ")})` };
  }
  const top = text[0];
  const rule = TOPS[top];
  if (!rule) {
    return { state: "invalid", message: `top-level category must be one of ${Object.keys(TOPS).join(", ")}` };
  }
  let pos = 1;
  if (rule.form !== null) {
    if (pos >= text.length) {
      return { state: "incomplete", hint: `${top} needs a digit: ${rule.form.map((v) => top + v).join(", ")}` };
    }
    if (!rule.form.includes(text[pos])) {
      return { state: "invalid", message: `segment "${top}${text[pos]}": expected ${top}(${rule.form.join("|")})` };
    }
    pos += 1;
  }
  let lastSegmentValue = "";
  for (const seg of rule.segments) {
    if (pos >= text.length) {
      return { state: "incomplete", hint: `next: ${SEP}${seg.letter}(${seg.values.join("|")}) for ${seg.name}` };
    }
    if (text[pos] !== SEP) {
      return { state: "invalid", message: `expected "${SEP}" before the ${seg.name} segment` };
    }
    pos += 1;
    if (pos >= text.length) {
      return { state: "incomplete", hint: `next: ${seg.letter}(${seg.values.join("|")}) for ${seg.name}` };
    }
    if (text[pos] !== seg.letter) {
      return { state: "invalid", message: `segment "${text.slice(pos, pos + 2)}": expected the ${seg.name} segment ${seg.letter}(${seg.values.join("|")})` };
    }
    pos += 1;
    if (pos >= text.length) {
      return { state: "incomplete", hint: `${seg.name} value: ${seg.letter}(${seg.values.join("|")})` };
    }
    if (!seg.values.includes(text[pos])) {
      return { state: "invalid", message: `segment "${seg.letter}${text[pos]}": ${seg.name} must be ${seg.letter}(${seg.values.join("|")})` };
    }
    lastSegmentValue = text[pos];
    pos += 1;
  }
  if (rule.suffix && pos < text.length && rule.suffix.values.includes(text[pos])) {
    if (!rule.suffix.allowed_segment_values.includes(lastSegmentValue)) {
      const seg = rule.suffix.after_segment;
      return {
        state: "invalid",
        message: `segment "${seg}${lastSegmentValue}${text[pos]}": ${rule.suffix.name} suffix is only allowed after ${seg}(${rule.suffix.allowed_segment_values.join("|")})`,
      };
    }
    pos += 1;
  }
  if (pos !== text.length) {
    return { state: "invalid", message: `unexpected trailing text "${text.slice(pos)}"` };
  }
  return { state: "valid", canonical: text };
}
