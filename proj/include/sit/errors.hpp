#pragma once

#include <stdexcept>
#include <string>

namespace sit {

// Every error thrown by the library derives from sit::Error so callers
// (the CLI in particular) can report a single-line message.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual const char* kind() const noexcept { return "error"; }
};

class DimensionError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "dimension"; }
};

class ContractError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "contract"; }
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }
    const char* kind() const noexcept override { return "parse"; }

private:
    std::size_t line_;
};

class DataError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "data"; }
};

class IoError : public Error {
public:
    IoError(const std::string& what, std::string path)
        : Error(what + ": " + path), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }
    const char* kind() const noexcept override { return "io"; }

private:
    std::string path_;
};

class ConfigError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "config"; }
};

class NumericError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "numeric"; }
};

}  // namespace sit
