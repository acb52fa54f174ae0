#include "pchase/assembler.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <vector>

namespace pchase {
namespace {

struct Token {
  std::string text;
  std::size_t column;  // 1-based
};

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    const char c = line[i];
    if (c == '#') break;
    if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j])) &&
           line[j] != ',' && line[j] != '#')
      ++j;
    out.push_back({std::string(line.substr(i, j - i)), i + 1});
    i = j;
  }
  return out;
}

std::optional<std::uint64_t> parse_uint(std::string_view s) {
  if (s.empty()) return std::nullopt;
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    s.remove_prefix(2);
  }
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

bool is_label_name(std::string_view s) {
  if (s.empty() || std::isdigit(static_cast<unsigned char>(s[0]))) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) || c == '_'; });
}

const std::map<std::string, Opcode>& mnemonic_table() {
  static const std::map<std::string, Opcode> table = [] {
    std::map<std::string, Opcode> t;
    for (std::uint8_t b = 0x01; b <= 0x13; ++b) {
      const auto op = static_cast<Opcode>(b);
      t.emplace(std::string(mnemonic(op)), op);
    }
    t.emplace("MV", Opcode::Move);
    return t;
  }();
  return table;
}

struct PendingJump {
  std::size_t index;
  std::string label;
  std::size_t line;
  std::size_t column;
};

class Parser {
 public:
  Program run(std::string_view text) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      ++line_no;
      parse_line(text.substr(pos, end - pos), line_no);
      pos = end + 1;
    }
    resolve();
    return std::move(prog_);
  }

 private:
  [[noreturn]] void error(std::size_t line, std::size_t col, const std::string& msg) {
    throw AsmError(line, col, msg);
  }

  void parse_line(std::string_view line, std::size_t line_no) {
    auto toks = tokenize(line);
    std::size_t k = 0;
    while (k < toks.size() && toks[k].text.size() > 1 && toks[k].text.back() == ':') {
      std::string name = toks[k].text.substr(0, toks[k].text.size() - 1);
      if (!is_label_name(name)) error(line_no, toks[k].column, "bad label name '" + name + "'");
      if (labels_.count(name)) error(line_no, toks[k].column, "duplicate label '" + name + "'");
      labels_[name] = prog_.code.size();
      ++k;
    }
    if (k == toks.size()) return;
    parse_instruction(std::vector<Token>(toks.begin() + static_cast<std::ptrdiff_t>(k), toks.end()),
                      line_no);
  }

  Operand operand(const Token& t, std::size_t line_no) {
    const std::string lo = lower(t.text);
    if (lo == "cur_ptr") return Operand::cur_ptr();
    if (lo == "key_not_found") return Operand::imm(kKeyNotFound);
    auto indexed = [&](std::string_view prefix) -> std::optional<std::uint16_t> {
      if (lo.size() <= prefix.size() + 2 || lo.compare(0, prefix.size(), prefix) != 0) return std::nullopt;
      if (lo[prefix.size()] != '[' || lo.back() != ']') return std::nullopt;
      auto v = parse_uint(std::string_view(lo).substr(prefix.size() + 1, lo.size() - prefix.size() - 2));
      if (!v || *v > 0xFFFF) error(line_no, t.column, "bad offset in '" + t.text + "'");
      return static_cast<std::uint16_t>(*v);
    };
    if (auto off = indexed("sp")) return Operand::sp(*off);
    if (auto off = indexed("scratch_pad")) return Operand::sp(*off);
    if (auto off = indexed("data")) return Operand::data(*off);
    if (auto v = parse_uint(lo)) return Operand::imm(*v);
    error(line_no, t.column, "bad operand '" + t.text + "'");
  }

  void expect_count(const std::vector<Token>& toks, std::size_t n, std::size_t line_no) {
    if (toks.size() != n + 1)
      error(line_no, toks[0].column,
            std::string(toks[0].text) + " expects " + std::to_string(n) + " operand(s)");
  }

  void parse_instruction(const std::vector<Token>& toks, std::size_t line_no) {
    std::string head = upper(toks[0].text);
    std::string suffix;
    if (auto dot = head.find('.'); dot != std::string::npos) {
      suffix = head.substr(dot + 1);
      head = head.substr(0, dot);
    }
    const auto& table = mnemonic_table();
    auto it = table.find(head);
    if (it == table.end()) error(line_no, toks[0].column, "unknown mnemonic '" + toks[0].text + "'");
    const Opcode op = it->second;

    Instruction in;
    in.op = op;
    if (!suffix.empty()) {
      if (op == Opcode::Compare && suffix == "S") {
        in.is_signed = true;
      } else if ((op == Opcode::Move || op == Opcode::Store) &&
                 (suffix == "1" || suffix == "2" || suffix == "4" || suffix == "8")) {
        in.width = static_cast<std::uint8_t>(suffix[0] - '0');
      } else {
        error(line_no, toks[0].column, "bad suffix '." + suffix + "'");
      }
    }

    switch (op) {
      case Opcode::Load: {
        expect_count(toks, 2, line_no);
        auto start = parse_uint(toks[1].text);
        auto len = parse_uint(toks[2].text);
        if (!start || *start > 0xFFFF) error(line_no, toks[1].column, "bad LOAD window start");
        if (!len) error(line_no, toks[2].column, "bad LOAD window length");
        in.a = Operand::data(static_cast<std::uint16_t>(*start));
        in.imm = *len;
        break;
      }
      case Opcode::Not:
        expect_count(toks, 1, line_no);
        in.a = operand(toks[1], line_no);
        break;
      case Opcode::JumpEq:
      case Opcode::JumpNeq:
      case Opcode::JumpLt:
      case Opcode::JumpGt:
      case Opcode::JumpLe:
      case Opcode::JumpGe: {
        expect_count(toks, 1, line_no);
        if (auto v = parse_uint(toks[1].text)) {
          in.imm = *v;
        } else {
          if (!is_label_name(toks[1].text)) error(line_no, toks[1].column, "bad jump target");
          jumps_.push_back({prog_.code.size(), toks[1].text, line_no, toks[1].column});
        }
        break;
      }
      case Opcode::NextIter:
      case Opcode::Return:
        expect_count(toks, 0, line_no);
        break;
      default:
        expect_count(toks, 2, line_no);
        in.a = operand(toks[1], line_no);
        in.b = operand(toks[2], line_no);
        break;
    }
    prog_.code.push_back(in);
  }

  void resolve() {
    for (const auto& j : jumps_) {
      auto it = labels_.find(j.label);
      if (it == labels_.end()) error(j.line, j.column, "unresolved label '" + j.label + "'");
      if (it->second <= j.index)
        error(j.line, j.column, "label '" + j.label + "' resolves to a backward target");
      prog_.code[j.index].imm = it->second;
    }
  }

  Program prog_;
  std::map<std::string, std::size_t> labels_;
  std::vector<PendingJump> jumps_;
};

std::string format_operand(const Operand& o) {
  switch (o.kind) {
    case OperandKind::None: return "";
    case OperandKind::CurPtr: return "cur_ptr";
    case OperandKind::Sp: return "sp[" + std::to_string(o.offset) + "]";
    case OperandKind::Data: return "data[" + std::to_string(o.offset) + "]";
    case OperandKind::Imm: {
      if (o.value <= 0xFFFF) return std::to_string(o.value);
      std::ostringstream os;
      os << "0x" << std::hex << std::uppercase << o.value;
      return os.str();
    }
  }
  return "";
}

}  // namespace

Program assemble(std::string_view text) { return Parser{}.run(text); }

std::string disassemble(const Program& program) {
  std::set<std::size_t> targets;
  for (const auto& in : program.code)
    if (is_jump(in.op)) targets.insert(in.imm);

  std::ostringstream os;
  for (std::size_t i = 0; i < program.size(); ++i) {
    if (targets.count(i)) os << 'L' << i << ":\n";
    const Instruction& in = program.code[i];
    os << "  " << mnemonic(in.op);
    if ((in.op == Opcode::Move || in.op == Opcode::Store) && in.width != 8)
      os << '.' << static_cast<int>(in.width);
    if (in.op == Opcode::Compare && in.is_signed) os << ".s";
    if (in.op == Opcode::Load) {
      os << ' ' << in.a.offset << ' ' << in.imm;
    } else if (is_jump(in.op)) {
      if (in.imm < program.size())
        os << " L" << in.imm;
      else
        os << ' ' << in.imm;
    } else {
      if (in.a.kind != OperandKind::None) os << ' ' << format_operand(in.a);
      if (in.b.kind != OperandKind::None) os << ' ' << format_operand(in.b);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace pchase
