#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace manga {

/// Broad failure classes; the CLI maps them onto exit codes 2, 3 and 4.
enum class ErrorKind { Config, Data, Runtime };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

struct RuntimeError : Error {
    explicit RuntimeError(const std::string& what) : Error(ErrorKind::Runtime, what) {}
};

/// Malformed XML. Line and column are 1-based.
struct XmlParseError : DataError {
    XmlParseError(const std::string& msg, int line, int column)
        : DataError("xml:" + std::to_string(line) + ":" + std::to_string(column) + ": " + msg),
          line(line), column(column) {}
    int line;
    int column;
};

struct Violation {
    std::string code;     ///< stable identifier, e.g. "bbox_out_of_page"
    std::string element;  ///< e.g. "panel[2]"
    std::string message;
};

struct ValidationError : DataError {
    explicit ValidationError(std::vector<Violation> v)
        : DataError(summarize(v)), violations(std::move(v)) {}
    std::vector<Violation> violations;

private:
    static std::string summarize(const std::vector<Violation>& v) {
        std::string s = "validation failed:";
        for (const auto& x : v) s += " [" + x.code + " @ " + x.element + ": " + x.message + "]";
        return s;
    }
};

/// Transport-level failure of an external client; callers may retry.
struct TransportError : RuntimeError {
    explicit TransportError(const std::string& what) : RuntimeError(what) {}
};

/// An external client answered, but the answer breaks the contract.
struct ProtocolError : RuntimeError {
    explicit ProtocolError(const std::string& what) : RuntimeError(what) {}
};

/// Runs fn, prefixing any manga::Error message with "stage: " while keeping its class.
template <class Fn>
decltype(auto) in_stage(const std::string& stage, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        const std::string msg = stage + ": " + e.what();
        switch (e.kind()) {
            case ErrorKind::Config: throw ConfigError(msg);
            case ErrorKind::Data: throw DataError(msg);
            default: throw RuntimeError(msg);
        }
    }
}

}  // namespace manga
