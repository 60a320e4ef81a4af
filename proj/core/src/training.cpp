#include "dafar/training.hpp"

#include <sstream>

namespace dafar {

std::string loss_log_csv(const std::vector<EpochLog>& log) {
    std::ostringstream os;
    os << "epoch,joint_loss,ce_term,recon_term,clean_accuracy\n";
    os.precision(9);
    for (const auto& r : log)
        os << r.epoch << ',' << r.joint_loss << ',' << r.ce_term << ',' << r.recon_term << ','
           << r.clean_accuracy << '\n';
    return os.str();
}

}  // namespace dafar
