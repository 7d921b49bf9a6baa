#pragma once

// JSON-over-HTTP front end of the experiment service.

#include <memory>
#include <string>

#include "poprank/experiment.hpp"

namespace httplib {
class Server;
}

namespace poprank {

int http_status(ServiceErrorKind kind);

class HttpFrontend {
 public:
  explicit HttpFrontend(ExperimentService& service);
  ~HttpFrontend();

  /// Binds to host:port (port 0 picks a free port) and returns the bound
  /// port, or -1 on failure.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called.
  bool listen();
  void stop();

 private:
  ExperimentService& service_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace poprank
