# Simulation, attack and accounting modules; imported as modules_script.m_*
