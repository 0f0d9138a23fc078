#ifdef CONFIG_TCP
int tcp_init(void);
#endif
int net_init(void);
