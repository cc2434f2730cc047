#include "virlab/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "virlab/error.hpp"

namespace virlab {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    out.flush();
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string metrics_csv(const MetricsLog& log) {
    std::ostringstream out;
    out << "epoch,lr,train_loss,clean_acc";
    for (const auto& a : log.attack_names) out << ",robust_acc_" << a;
    for (std::size_t c = 0; c < log.num_classes; ++c) out << ",class_acc_" << c;
    for (std::size_t c = 0; c < log.num_classes; ++c) out << ",class_weight_" << c;
    out << ",best_epoch,best_robust_acc\n";
    for (const auto& r : log.rows) {
        out << r.epoch << ',' << format_double(r.lr) << ',' << format_double(r.train_loss) << ',';
        if (r.clean_acc) out << format_double(*r.clean_acc);
        for (std::size_t i = 0; i < log.attack_names.size(); ++i) {
            out << ',';
            if (i < r.robust_acc.size()) out << format_double(r.robust_acc[i]);
        }
        for (std::size_t c = 0; c < log.num_classes; ++c) {
            out << ',';
            if (c < r.class_acc.size()) out << format_double(r.class_acc[c]);
        }
        for (std::size_t c = 0; c < log.num_classes; ++c) {
            out << ',';
            if (c < r.class_weight.size()) out << format_double(r.class_weight[c]);
        }
        out << ',' << r.best_epoch << ',' << format_double(r.best_robust) << '\n';
    }
    return out.str();
}

std::string weights_csv(std::span<const WeightRecord> records) {
    std::ostringstream out;
    out << "epoch,sample_index,class,prob_true,s_v,s_d,weight\n";
    for (const auto& r : records)
        out << r.epoch << ',' << r.sample_index << ',' << r.label << ',' << format_double(r.prob_true) << ','
            << format_double(r.s_v) << ',' << format_double(r.s_d) << ',' << format_double(r.weight) << '\n';
    return out.str();
}

namespace {

void confusion_header(std::ostringstream& out, std::size_t c) {
    out << "true";
    for (std::size_t j = 0; j < c; ++j) out << ",pred_" << j;
    out << '\n';
}

}  // namespace

std::string confusion_csv(const Confusion& confusion) {
    std::ostringstream out;
    confusion_header(out, confusion.size());
    for (std::size_t i = 0; i < confusion.size(); ++i) {
        out << i;
        for (std::size_t v : confusion[i]) out << ',' << v;
        out << '\n';
    }
    return out.str();
}

std::string confusion_percent_csv(const Confusion& confusion) {
    std::ostringstream out;
    confusion_header(out, confusion.size());
    for (std::size_t i = 0; i < confusion.size(); ++i) {
        std::size_t total = 0;
        for (std::size_t v : confusion[i]) total += v;
        out << i;
        for (std::size_t v : confusion[i])
            out << ',' << format_double(total ? 100.0 * static_cast<double>(v) / static_cast<double>(total) : 0.0);
        out << '\n';
    }
    return out.str();
}

std::string sweep_csv(const SweepResult& result) {
    std::ostringstream out;
    out << "alpha,gamma,beta,status,clean_acc";
    for (const auto& a : result.attack_names) out << ",robust_acc_" << a;
    out << ",best_epoch,best_robust_acc,error\n";
    for (const auto& r : result.rows) {
        out << format_double(r.alpha) << ',' << format_double(r.gamma) << ',' << format_double(r.beta) << ','
            << (r.ok ? "ok" : "failed") << ',';
        if (r.ok) out << format_double(r.clean_acc);
        for (std::size_t i = 0; i < result.attack_names.size(); ++i) {
            out << ',';
            if (r.ok && i < r.robust_acc.size()) out << format_double(r.robust_acc[i]);
        }
        out << ',';
        if (r.ok) out << r.best_epoch << ',' << format_double(r.best_robust);
        else out << ',';
        // Errors are free text; keep the CSV single-line and comma-free.
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        out << ',' << err << '\n';
    }
    return out.str();
}

std::size_t CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw IoError("CSV has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double to_double(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw IoError("bad numeric CSV cell '" + s + "'");
    return v;
}

long long to_int(const std::string& s) {
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw IoError("bad integer CSV cell '" + s + "'");
    return v;
}

}  // namespace

CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_line(line);
        if (first) {
            t.header = std::move(cells);
            first = false;
            continue;
        }
        if (cells.size() != t.header.size())
            throw IoError("CSV row has " + std::to_string(cells.size()) + " cells, header has " +
                          std::to_string(t.header.size()));
        t.rows.push_back(std::move(cells));
    }
    if (first) throw IoError("CSV is empty");
    return t;
}

CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_text(path)); }

std::vector<ClassWeightRow> class_weight_table(std::span<const WeightRecord> records) {
    std::map<std::pair<int, int>, ClassWeightRow> acc;
    for (const auto& r : records) {
        auto& row = acc[{r.epoch, r.label}];
        row.epoch = r.epoch;
        row.label = r.label;
        ++row.count;
        row.weight_sum += r.weight;
    }
    std::vector<ClassWeightRow> out;
    for (auto& [_, row] : acc) {
        row.weight_mean = row.weight_sum / static_cast<double>(row.count);
        out.push_back(row);
    }
    return out;
}

std::string class_weight_csv(std::span<const ClassWeightRow> rows) {
    std::ostringstream out;
    out << "epoch,class,count,weight_sum,weight_mean\n";
    for (const auto& r : rows)
        out << r.epoch << ',' << r.label << ',' << r.count << ',' << format_double(r.weight_sum) << ','
            << format_double(r.weight_mean) << '\n';
    return out.str();
}

std::vector<WeightRecord> parse_weights_csv(const CsvTable& t) {
    const std::size_t ce = t.column("epoch"), ci = t.column("sample_index"), cc = t.column("class"),
                      cp = t.column("prob_true"), cv = t.column("s_v"), cd = t.column("s_d"), cw = t.column("weight");
    std::vector<WeightRecord> out;
    out.reserve(t.rows.size());
    for (const auto& row : t.rows) {
        WeightRecord r;
        r.epoch = static_cast<int>(to_int(row[ce]));
        r.sample_index = static_cast<std::size_t>(to_int(row[ci]));
        r.label = static_cast<int>(to_int(row[cc]));
        r.prob_true = to_double(row[cp]);
        r.s_v = to_double(row[cv]);
        r.s_d = to_double(row[cd]);
        r.weight = to_double(row[cw]);
        out.push_back(r);
    }
    return out;
}

Confusion parse_confusion_csv(const CsvTable& t) {
    const std::size_t c = t.header.size() - 1;
    if (t.rows.size() != c) throw IoError("confusion matrix is not square");
    Confusion m(c, std::vector<std::size_t>(c, 0));
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const long long v = to_int(t.rows[i][j + 1]);
            if (v < 0) throw IoError("negative count in confusion matrix");
            m[i][j] = static_cast<std::size_t>(v);
        }
    return m;
}

std::vector<std::filesystem::path> regenerate_reports(const std::filesystem::path& run_dir,
                                                      const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(run_dir)) throw IoError("run directory '" + run_dir.string() + "' does not exist");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
    std::vector<fs::path> written;

    if (fs::exists(run_dir / "weights.csv")) {
        const auto records = parse_weights_csv(read_csv(run_dir / "weights.csv"));
        const auto rows = class_weight_table(records);
        written.push_back(out_dir / "class_weights.csv");
        write_text(written.back(), class_weight_csv(rows));
    }

    std::vector<fs::path> confusions;
    for (const auto& entry : fs::directory_iterator(run_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("confusion_", 0) == 0 && name.size() > 4 && name.ends_with(".csv") &&
            !name.ends_with("_percent.csv"))
            confusions.push_back(entry.path());
    }
    std::sort(confusions.begin(), confusions.end());
    for (const auto& p : confusions) {
        const auto m = parse_confusion_csv(read_csv(p));
        written.push_back(out_dir / (p.stem().string() + "_percent.csv"));
        write_text(written.back(), confusion_percent_csv(m));
    }

    if (fs::exists(run_dir / "metrics.csv")) {
        const auto t = read_csv(run_dir / "metrics.csv");
        const std::size_t ce = t.column("epoch");
        std::ostringstream out;
        out << "epoch,class,accuracy\n";
        for (const auto& row : t.rows)
            for (std::size_t j = 0; j < t.header.size(); ++j) {
                const auto& h = t.header[j];
                if (h.rfind("class_acc_", 0) != 0 || row[j].empty()) continue;
                out << row[ce] << ',' << h.substr(10) << ',' << row[j] << '\n';
            }
        written.push_back(out_dir / "class_accuracy.csv");
        write_text(written.back(), out.str());
    }
    if (written.empty()) throw IoError("no run artifacts found in '" + run_dir.string() + "'");
    return written;
}

TheoryRow theory_row(const gmm::GmmSpec& spec, std::size_t n, std::uint64_t seed) {
    TheoryRow r;
    r.spec = spec;
    r.n = n;
    r.closed = gmm::theorem1_risks(spec);
    const auto clf = gmm::optimal_linear(spec);
    r.mc = gmm::monte_carlo_risks(clf, spec, n, seed);
    r.c_plus = gmm::threshold_from_plus(spec);
    r.c_minus = gmm::threshold_from_minus(spec);
    r.p_minus = 1.0 - r.closed.minus;
    r.p_plus = 1.0 - r.closed.plus;
    // A zero-variance estimate still gets one count of slack.
    const double se_m = std::max(r.mc.se_minus, 1.0 / static_cast<double>(r.mc.n_minus));
    const double se_p = std::max(r.mc.se_plus, 1.0 / static_cast<double>(r.mc.n_plus));
    r.pass_mc = std::abs(r.mc.minus - r.closed.minus) <= 5.0 * se_m && std::abs(r.mc.plus - r.closed.plus) <= 5.0 * se_p;
    r.pass_ordering = r.closed.minus < r.closed.plus && r.p_minus > r.p_plus;
    r.pass_threshold = std::abs(r.c_plus - r.c_minus) <= 1e-9 * (1.0 + std::abs(r.c_plus));
    return r;
}

std::string theory_csv(std::span<const TheoryRow> rows) {
    std::ostringstream out;
    out << "d,eta,sigma,k_var,n,r_minus,r_plus,mc_r_minus,mc_r_plus,se_minus,se_plus,threshold_plus,threshold_minus,"
           "p_minus,p_plus,pass_mc,pass_ordering,pass_threshold\n";
    for (const auto& r : rows)
        out << r.spec.d << ',' << format_double(r.spec.eta) << ',' << format_double(r.spec.sigma) << ','
            << format_double(r.spec.k_var) << ',' << r.n << ',' << format_double(r.closed.minus) << ','
            << format_double(r.closed.plus) << ',' << format_double(r.mc.minus) << ',' << format_double(r.mc.plus)
            << ',' << format_double(r.mc.se_minus) << ',' << format_double(r.mc.se_plus) << ','
            << format_double(r.c_plus) << ',' << format_double(r.c_minus) << ',' << format_double(r.p_minus) << ','
            << format_double(r.p_plus) << ',' << (r.pass_mc ? "pass" : "fail") << ','
            << (r.pass_ordering ? "pass" : "fail") << ',' << (r.pass_threshold ? "pass" : "fail") << '\n';
    return out.str();
}

}  // namespace virlab
