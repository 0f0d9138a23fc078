#include <stdio.h>

void debug_dump(void)
{
#if defined(CONFIG_NET) || \
    defined(CONFIG_USB)
	puts("io subsystems");
#endif
}
