#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "laysyn/error.hpp"
#include "laysyn/pipeline.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kDiagnostics = 1;
constexpr int kUsage = 2;

bool read_file(const std::string& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream ss;
  ss << in.rdbuf();
  out = ss.str();
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thread-value and shared-memory layout synthesis for tile programs"};
  std::string program_path, catalog_path, report_path, format = "json";
  std::size_t max_candidates = 64;
  int explain_op = -1;
  bool all = false;
  app.add_option("--program", program_path, "tile program")->required();
  app.add_option("--catalog", catalog_path, "instruction catalog")->required();
  app.add_option("--max-candidates", max_candidates, "search leaf limit")->capture_default_str();
  app.add_option("--report", report_path, "write the report here instead of stdout");
  app.add_option("--format", format, "report format")->check(CLI::IsMember({"json", "text"}))->capture_default_str();
  app.add_option("--explain", explain_op, "print the constraint trace of one op and exit");
  app.add_flag("--all-candidates", all, "include every candidate in the report");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  std::string program_text, catalog_text;
  if (!read_file(program_path, program_text)) {
    std::cerr << "error: cannot read program " << program_path << "\n";
    return kUsage;
  }
  if (!std::filesystem::is_regular_file(catalog_path) || !read_file(catalog_path, catalog_text)) {
    std::cerr << "error: cannot read catalog " << catalog_path << "\n";
    return kUsage;
  }

  try {
    const laysyn::Catalog cat = laysyn::parse_catalog(catalog_text);
    const laysyn::ProgramGraph g = laysyn::parse_program(program_text);
    if (explain_op >= 0 || app.count("--explain") > 0) {
      std::cout << laysyn::explain(g, cat, explain_op);
      return kOk;
    }
    const laysyn::PipelineOptions opts{max_candidates, all};
    const auto result = laysyn::run_pipeline(g, cat, opts);
    for (const auto& d : result.diagnostics)
      std::cerr << d.kind << (d.op_index >= 0 ? " (op " + std::to_string(d.op_index) + ")" : "") << ": " << d.message << "\n";
    const std::string report = format == "json" ? laysyn::report_json(result, opts) : laysyn::report_text(result, opts);
    if (report_path.empty()) {
      std::cout << report;
    } else {
      std::ofstream out(report_path, std::ios::binary);
      if (!out) {
        std::cerr << "error: cannot write report " << report_path << "\n";
        return kUsage;
      }
      out << report;
    }
    return result.diagnostics.empty() ? kOk : kDiagnostics;
  } catch (const laysyn::Error& e) {
    std::cerr << e.what() << "\n";
    return kDiagnostics;
  }
}
